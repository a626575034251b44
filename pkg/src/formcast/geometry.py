"""Mesh data structures, STL I/O and spatial queries.

All lengths are millimeters unless a name says otherwise. The sheet lives in
the z >= 0 half space with the vacuum bed at z = 0; molds rest on the bed.
"""
from __future__ import annotations

import struct
import warnings
from dataclasses import dataclass, field
from enum import IntEnum

import numpy as np

from .errors import EmptyModel, InvalidDimensions, MalformedAscii, TruncatedFile

MACHINE_SHEET_LIMIT_MM = 130.0


class VertexState(IntEnum):
    FREE = 0
    CLAMPED_EDGE = 1
    ADHERED_TO_MOLD = 2


# ---------------------------------------------------------------------------
# STL documents
# ---------------------------------------------------------------------------

_BINARY_TRIANGLE = np.dtype([("data", "<f4", (12,)), ("attr", "<u2")])


@dataclass
class StlDocument:
    """Triangle soup as stored in an STL file.

    ``vertices`` has shape (T, 3, 3), ``normals`` shape (T, 3). ``fmt`` records
    the format the document was parsed from (or the writer default).
    """

    vertices: np.ndarray
    normals: np.ndarray
    name: str = ""
    fmt: str = "binary"

    def __post_init__(self) -> None:
        self.vertices = np.asarray(self.vertices, dtype=np.float64).reshape(-1, 3, 3)
        if self.normals is None or len(self.normals) == 0:
            self.normals = triangle_normals(self.vertices)
        self.normals = np.asarray(self.normals, dtype=np.float64).reshape(-1, 3)

    def __len__(self) -> int:
        return len(self.vertices)

    def geometry_equal(self, other: "StlDocument", tol: float = 1e-6) -> bool:
        if len(self) != len(other):
            return False
        return bool(np.all(np.abs(self.vertices - other.vertices) <= tol))


def triangle_normals(vertices: np.ndarray) -> np.ndarray:
    """Unit normals from vertex winding; zero vector for degenerate triangles."""
    v = np.asarray(vertices, dtype=np.float64).reshape(-1, 3, 3)
    n = np.cross(v[:, 1] - v[:, 0], v[:, 2] - v[:, 0])
    lens = np.linalg.norm(n, axis=1)
    safe = np.where(lens > 0.0, lens, 1.0)
    n = n / safe[:, None]
    n[lens == 0.0] = 0.0
    return n


def mesh_to_stl(vertices: np.ndarray, triangles: np.ndarray, name: str = "") -> StlDocument:
    """Build a triangle-soup document from an indexed mesh."""
    v = np.asarray(vertices, dtype=np.float64)
    t = np.asarray(triangles, dtype=np.int64)
    soup = v[t]
    return StlDocument(vertices=soup, normals=triangle_normals(soup), name=name)


def parse_stl(data: bytes) -> StlDocument:
    """Parse binary or ASCII STL bytes.

    Format detection follows the usual rule: a file is ASCII iff it starts
    with ``solid`` and the whole token stream parses as ASCII; anything else is
    treated as binary.
    """
    if data.lstrip()[:5] == b"solid":
        try:
            return _parse_ascii(data)
        except MalformedAscii:
            pass
    return _parse_binary(data)


def _parse_binary(data: bytes) -> StlDocument:
    if len(data) < 84:
        raise TruncatedFile(f"binary STL needs >= 84 bytes, got {len(data)}")
    header = data[:80]
    (count,) = struct.unpack_from("<I", data, 80)
    expected = 84 + 50 * count
    if len(data) != expected:
        raise TruncatedFile(
            f"binary STL declares {count} triangles ({expected} bytes) but file has {len(data)}"
        )
    if count == 0:
        raise EmptyModel("binary STL declares 0 triangles")
    raw = np.frombuffer(data, dtype=_BINARY_TRIANGLE, count=count, offset=84)
    flat = raw["data"].astype(np.float64)
    normals = flat[:, 0:3]
    vertices = flat[:, 3:12].reshape(-1, 3, 3)
    name = header.split(b"\x00", 1)[0].decode("latin-1").strip()
    return StlDocument(vertices=vertices, normals=normals, name=name, fmt="binary")


def _parse_ascii(data: bytes) -> StlDocument:
    try:
        text = data.decode("ascii")
    except UnicodeDecodeError as exc:
        raise MalformedAscii(f"not ASCII: {exc}") from exc
    lines = text.splitlines()
    if not lines or not lines[0].lstrip().startswith("solid"):
        raise MalformedAscii("missing 'solid' header line")
    name = lines[0].lstrip()[5:].strip()

    tokens = " ".join(lines[1:]).split()
    pos = 0

    def need(*expected: str) -> None:
        nonlocal pos
        for word in expected:
            if pos >= len(tokens) or tokens[pos] != word:
                got = tokens[pos] if pos < len(tokens) else "<eof>"
                raise MalformedAscii(f"expected '{word}', got '{got}'")
            pos += 1

    def floats(n: int) -> list[float]:
        nonlocal pos
        out = []
        for _ in range(n):
            if pos >= len(tokens):
                raise MalformedAscii("unexpected end of file in number list")
            try:
                out.append(float(tokens[pos]))
            except ValueError as exc:
                raise MalformedAscii(f"bad number '{tokens[pos]}'") from exc
            pos += 1
        return out

    normals = []
    triangles = []
    while pos < len(tokens) and tokens[pos] == "facet":
        need("facet", "normal")
        normals.append(floats(3))
        need("outer", "loop")
        tri = []
        for _ in range(3):
            need("vertex")
            tri.append(floats(3))
        triangles.append(tri)
        need("endloop", "endfacet")
    need("endsolid")
    if not triangles:
        raise EmptyModel("ASCII STL contains no facets")
    return StlDocument(
        vertices=np.array(triangles, dtype=np.float64),
        normals=np.array(normals, dtype=np.float64),
        name=name,
        fmt="ascii",
    )


def write_stl(doc: StlDocument, fmt: str = "binary") -> bytes:
    """Serialize a document; normals are recomputed from vertex winding.

    Binary output is bit-exact: for binary fixtures produced by this writer,
    ``write_stl(parse_stl(b)) == b``. Binary coordinates are float32 as the
    format requires; ASCII keeps full float64 precision.
    """
    if len(doc) == 0:
        raise EmptyModel("refusing to write an STL with 0 triangles")
    if fmt == "binary":
        return _write_binary(doc)
    if fmt == "ascii":
        return _write_ascii(doc)
    raise ValueError(f"unknown STL format {fmt!r}")


def _write_binary(doc: StlDocument) -> bytes:
    verts32 = doc.vertices.astype(np.float32)
    # Recompute normals from the rounded vertices so parse -> write round-trips.
    normals32 = triangle_normals(verts32.astype(np.float64)).astype(np.float32)
    count = len(verts32)
    out = bytearray(84 + 50 * count)
    header = doc.name.encode("latin-1", errors="replace")[:80]
    out[0 : len(header)] = header
    struct.pack_into("<I", out, 80, count)
    rec = np.zeros(count, dtype=_BINARY_TRIANGLE)
    rec["data"][:, 0:3] = normals32
    rec["data"][:, 3:12] = verts32.reshape(count, 9)
    out[84:] = rec.tobytes()
    return bytes(out)


def _write_ascii(doc: StlDocument) -> bytes:
    normals = triangle_normals(doc.vertices)
    lines = [f"solid {doc.name}".rstrip()]
    for tri, n in zip(doc.vertices, normals):
        lines.append(f"  facet normal {float(n[0])!r} {float(n[1])!r} {float(n[2])!r}")
        lines.append("    outer loop")
        for v in tri:
            lines.append(f"      vertex {float(v[0])!r} {float(v[1])!r} {float(v[2])!r}")
        lines.append("    endloop")
        lines.append("  endfacet")
    lines.append(f"endsolid {doc.name}".rstrip())
    lines.append("")
    return "\n".join(lines).encode("ascii")


# ---------------------------------------------------------------------------
# Sheet mesh
# ---------------------------------------------------------------------------


@dataclass
class SheetMesh:
    """Regular quad grid holding the flat (rest) and formed configurations.

    Vertex (i, j) has index ``j * nx + i``; x runs with i, y with j. Edges are
    listed deterministically: all x-axis edges row by row, then all y-axis
    edges. The index identity between ``rest_positions`` and ``positions`` is
    the single source of the 3D <-> 2D correspondence.
    """

    nx: int
    ny: int
    width_mm: float
    height_mm: float
    rest_positions: np.ndarray  # (N, 2)
    positions: np.ndarray  # (N, 3)
    vertex_state: np.ndarray  # (N,) uint8

    def __post_init__(self) -> None:
        n = self.nx * self.ny
        if self.rest_positions.shape != (n, 2) or self.positions.shape != (n, 3):
            raise InvalidDimensions("position array shapes do not match nx*ny")

    # -- grid topology -------------------------------------------------

    def vertex_index(self, i: int, j: int) -> int:
        return j * self.nx + i

    def vertex_ij(self, idx: int) -> tuple[int, int]:
        return idx % self.nx, idx // self.nx

    @property
    def vertex_count(self) -> int:
        return self.nx * self.ny

    @property
    def pitch(self) -> tuple[float, float]:
        return self.width_mm / (self.nx - 1), self.height_mm / (self.ny - 1)

    @property
    def edges(self) -> np.ndarray:
        """(E, 2) vertex index pairs, x-edges first then y-edges."""
        if not hasattr(self, "_edges"):
            nx, ny = self.nx, self.ny
            ii, jj = np.meshgrid(np.arange(nx - 1), np.arange(ny), indexing="xy")
            a = jj.ravel() * nx + ii.ravel()
            ex = np.stack([a, a + 1], axis=1)
            ii, jj = np.meshgrid(np.arange(nx), np.arange(ny - 1), indexing="xy")
            a = jj.ravel() * nx + ii.ravel()
            ey = np.stack([a, a + nx], axis=1)
            self._edges = np.concatenate([ex, ey]).astype(np.int64)
        return self._edges

    @property
    def edge_rest_lengths(self) -> np.ndarray:
        if not hasattr(self, "_edge_rest"):
            e = self.edges
            d = self.rest_positions[e[:, 1]] - self.rest_positions[e[:, 0]]
            self._edge_rest = np.linalg.norm(d, axis=1)
        return self._edge_rest

    @property
    def quads(self) -> np.ndarray:
        """(Q, 4) counter-clockwise corner indices; quad (i, j) at j*(nx-1)+i."""
        if not hasattr(self, "_quads"):
            nx, ny = self.nx, self.ny
            ii, jj = np.meshgrid(np.arange(nx - 1), np.arange(ny - 1), indexing="xy")
            a = jj.ravel() * nx + ii.ravel()
            self._quads = np.stack([a, a + 1, a + nx + 1, a + nx], axis=1).astype(np.int64)
        return self._quads

    def boundary_mask(self) -> np.ndarray:
        i = np.arange(self.vertex_count) % self.nx
        j = np.arange(self.vertex_count) // self.nx
        return (i == 0) | (i == self.nx - 1) | (j == 0) | (j == self.ny - 1)

    def triangulated(self) -> np.ndarray:
        """(2Q, 3) triangles with the diagonal split chosen by quad parity.

        Quads with even i+j split along corner0-corner2, odd ones along
        corner1-corner3, so exports are orientation-consistent and
        deterministic.
        """
        q = self.quads
        i = np.arange(len(q)) % (self.nx - 1)
        j = np.arange(len(q)) // (self.nx - 1)
        even = (i + j) % 2 == 0
        tris = np.empty((2 * len(q), 3), dtype=np.int64)
        tris[0::2] = np.where(even[:, None], q[:, [0, 1, 2]], q[:, [1, 2, 3]])
        tris[1::2] = np.where(even[:, None], q[:, [0, 2, 3]], q[:, [1, 3, 0]])
        return tris

    def copy(self) -> "SheetMesh":
        return SheetMesh(
            nx=self.nx,
            ny=self.ny,
            width_mm=self.width_mm,
            height_mm=self.height_mm,
            rest_positions=self.rest_positions.copy(),
            positions=self.positions.copy(),
            vertex_state=self.vertex_state.copy(),
        )


def build_sheet(
    nx: int, ny: int, width_mm: float, height_mm: float, clamp_height_mm: float = 0.0
) -> SheetMesh:
    """Create a flat sheet grid clamped at its boundary.

    Rest positions form a regular grid over the footprint; 3D positions start
    as the same grid lifted to ``z = clamp_height_mm``. Warns when the
    footprint exceeds the 130 mm machine bound.
    """
    if nx < 2 or ny < 2:
        raise InvalidDimensions(f"grid must be at least 2x2, got {nx}x{ny}")
    if width_mm <= 0 or height_mm <= 0:
        raise InvalidDimensions("sheet width and height must be positive")
    if width_mm > MACHINE_SHEET_LIMIT_MM or height_mm > MACHINE_SHEET_LIMIT_MM:
        warnings.warn(
            f"sheet {width_mm}x{height_mm} mm exceeds the {MACHINE_SHEET_LIMIT_MM} mm "
            "machine bound",
            stacklevel=2,
        )
    xs = np.linspace(0.0, width_mm, nx)
    ys = np.linspace(0.0, height_mm, ny)
    gx, gy = np.meshgrid(xs, ys, indexing="xy")
    rest = np.stack([gx.ravel(), gy.ravel()], axis=1)
    pos = np.column_stack([rest, np.full(len(rest), float(clamp_height_mm))])
    sheet = SheetMesh(
        nx=nx,
        ny=ny,
        width_mm=float(width_mm),
        height_mm=float(height_mm),
        rest_positions=rest,
        positions=pos,
        vertex_state=np.zeros(len(rest), dtype=np.uint8),
    )
    sheet.vertex_state[sheet.boundary_mask()] = VertexState.CLAMPED_EDGE
    return sheet


# ---------------------------------------------------------------------------
# Mold mesh and spatial queries
# ---------------------------------------------------------------------------


@dataclass
class MoldMesh:
    """Indexed triangle mesh for the mold, assumed to rest on the z = 0 bed."""

    vertices: np.ndarray  # (V, 3)
    triangles: np.ndarray  # (T, 3) int
    bounds: np.ndarray = field(init=False)  # (2, 3) min/max

    def __post_init__(self) -> None:
        self.vertices = np.asarray(self.vertices, dtype=np.float64).reshape(-1, 3)
        self.triangles = np.asarray(self.triangles, dtype=np.int64).reshape(-1, 3)
        if len(self.triangles) == 0:
            raise EmptyModel("mold has no triangles")
        if self.triangles.max() >= len(self.vertices) or self.triangles.min() < 0:
            raise InvalidDimensions("mold triangle index out of range")
        self.bounds = np.stack(
            [self.vertices.min(axis=0), self.vertices.max(axis=0)]
        )

    @classmethod
    def from_stl(cls, doc: StlDocument) -> "MoldMesh":
        """Weld exactly-equal vertices and drop zero-area triangles."""
        soup = doc.vertices.reshape(-1, 3)
        uniq, inverse = np.unique(soup, axis=0, return_inverse=True)
        tris = inverse.reshape(-1, 3)
        area2 = np.linalg.norm(
            np.cross(
                uniq[tris[:, 1]] - uniq[tris[:, 0]],
                uniq[tris[:, 2]] - uniq[tris[:, 0]],
            ),
            axis=1,
        )
        keep = tris[area2 > 1e-12]
        if len(keep) == 0:
            raise EmptyModel("mold has only degenerate triangles")
        return cls(vertices=uniq, triangles=keep)

    @property
    def triangle_count(self) -> int:
        return len(self.triangles)

    def triangle_corners(self) -> np.ndarray:
        return self.vertices[self.triangles]

    def check_footprint(self, width_mm: float, height_mm: float) -> None:
        lo, hi = self.bounds
        if lo[0] < 0 or lo[1] < 0 or hi[0] > width_mm or hi[1] > height_mm:
            warnings.warn(
                f"mold bounds {lo[:2]}..{hi[:2]} fall outside the "
                f"{width_mm}x{height_mm} mm sheet footprint",
                stacklevel=2,
            )

    @property
    def index(self) -> "TriangleIndex":
        if not hasattr(self, "_index"):
            self._index = TriangleIndex(self)
        return self._index


def _closest_on_triangles(corners: np.ndarray, points: np.ndarray) -> np.ndarray:
    """Closest point on triangle i to query point i, vectorized over pairs.

    Region classification per Ericson's "Real-Time Collision Detection"
    (ClosestPtPointTriangle), evaluated with boolean masks.
    """
    a, b, c = corners[:, 0], corners[:, 1], corners[:, 2]
    p = points
    result = np.empty_like(p)
    remain = np.ones(len(p), dtype=bool)

    ab = b - a
    ac = c - a
    ap = p - a
    d1 = np.einsum("ij,ij->i", ab, ap)
    d2 = np.einsum("ij,ij->i", ac, ap)
    is_a = (d1 <= 0.0) & (d2 <= 0.0)
    result[is_a] = a[is_a]
    remain &= ~is_a

    bp = p - b
    d3 = np.einsum("ij,ij->i", ab, bp)
    d4 = np.einsum("ij,ij->i", ac, bp)
    is_b = (d3 >= 0.0) & (d4 <= d3) & remain
    result[is_b] = b[is_b]
    remain &= ~is_b

    vc = d1 * d4 - d3 * d2
    is_ab = (vc <= 0.0) & (d1 >= 0.0) & (d3 <= 0.0) & remain
    if is_ab.any():
        denom = d1[is_ab] - d3[is_ab]
        v = np.where(denom != 0.0, d1[is_ab] / np.where(denom != 0.0, denom, 1.0), 0.0)
        result[is_ab] = a[is_ab] + v[:, None] * ab[is_ab]
    remain &= ~is_ab

    cp = p - c
    d5 = np.einsum("ij,ij->i", ab, cp)
    d6 = np.einsum("ij,ij->i", ac, cp)
    is_c = (d6 >= 0.0) & (d5 <= d6) & remain
    result[is_c] = c[is_c]
    remain &= ~is_c

    vb = d5 * d2 - d1 * d6
    is_ac = (vb <= 0.0) & (d2 >= 0.0) & (d6 <= 0.0) & remain
    if is_ac.any():
        denom = d2[is_ac] - d6[is_ac]
        w = np.where(denom != 0.0, d2[is_ac] / np.where(denom != 0.0, denom, 1.0), 0.0)
        result[is_ac] = a[is_ac] + w[:, None] * ac[is_ac]
    remain &= ~is_ac

    va = d3 * d6 - d5 * d4
    is_bc = (va <= 0.0) & (d4 - d3 >= 0.0) & (d5 - d6 >= 0.0) & remain
    if is_bc.any():
        denom = (d4[is_bc] - d3[is_bc]) + (d5[is_bc] - d6[is_bc])
        w = np.where(denom != 0.0, (d4[is_bc] - d3[is_bc]) / np.where(denom != 0.0, denom, 1.0), 0.0)
        result[is_bc] = b[is_bc] + w[:, None] * (c[is_bc] - b[is_bc])
    remain &= ~is_bc

    if remain.any():
        denom = va[remain] + vb[remain] + vc[remain]
        denom = np.where(denom != 0.0, denom, 1.0)
        v = vb[remain] / denom
        w = vc[remain] / denom
        result[remain] = a[remain] + v[:, None] * ab[remain] + w[:, None] * ac[remain]
    return result


class TriangleIndex:
    """Bounding-sphere pruned closest-point and ray-parity queries.

    The prune is conservative: candidate triangles are exactly those whose
    bounding-sphere lower bound can beat the best upper bound, so results
    match an exhaustive scan to float precision.
    """

    def __init__(self, mold: MoldMesh):
        self.mold = mold
        self.corners = mold.triangle_corners()
        self.centroids = self.corners.mean(axis=1)
        self.radii = np.linalg.norm(
            self.corners - self.centroids[:, None, :], axis=2
        ).max(axis=1)

    def closest(self, points: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Closest surface points for many queries.

        Returns (points_on_mold (P,3), distances (P,), triangle_indices (P,)).
        """
        pts = np.asarray(points, dtype=np.float64).reshape(-1, 3)
        n_pts, n_tri = len(pts), len(self.corners)
        out_pts = np.empty((n_pts, 3))
        out_dist = np.empty(n_pts)
        out_tri = np.empty(n_pts, dtype=np.int64)

        chunk = max(1, int(4_000_000 // max(n_tri, 1)))
        for start in range(0, n_pts, chunk):
            sl = slice(start, min(start + chunk, n_pts))
            p = pts[sl]
            d_cent = np.linalg.norm(
                p[:, None, :] - self.centroids[None, :, :], axis=2
            )
            # Upper bound from the nearest-centroid triangle, exact distance.
            seed = np.argmin(d_cent, axis=1)
            seed_cp = _closest_on_triangles(self.corners[seed], p)
            ub = np.linalg.norm(seed_cp - p, axis=1)
            lb = d_cent - self.radii[None, :]
            cand_p, cand_t = np.nonzero(lb <= (ub[:, None] + 1e-9))
            cp = _closest_on_triangles(self.corners[cand_t], p[cand_p])
            d = np.linalg.norm(cp - p[cand_p], axis=1)
            # Reduce per query point; first minimum wins, ordering is fixed.
            order = np.lexsort((cand_t, d, cand_p))
            cand_p, cand_t, d, cp = cand_p[order], cand_t[order], d[order], cp[order]
            first = np.unique(cand_p, return_index=True)[1]
            out_pts[sl] = cp[first]
            out_dist[sl] = d[first]
            out_tri[sl] = cand_t[first]
        return out_pts, out_dist, out_tri

    def contains(self, points: np.ndarray) -> np.ndarray:
        """Inside test for the mold closed by the z = 0 bed plane.

        A point is inside when it lies below the bed or when a +z ray crosses
        the mold surface an odd number of times. Ray origins get a fixed tiny
        xy offset so grazing hits on triangle edges stay deterministic.
        """
        pts = np.asarray(points, dtype=np.float64).reshape(-1, 3)
        inside = pts[:, 2] < 0.0
        above = ~inside
        if above.any():
            crossings = self._ray_up_crossings(pts[above])
            inside[above] = crossings % 2 == 1
        return inside

    def _ray_up_crossings(self, pts: np.ndarray) -> np.ndarray:
        a, b, c = self.corners[:, 0], self.corners[:, 1], self.corners[:, 2]
        # 2D signed areas against each triangle edge in the xy plane.
        eps = np.array([1.13e-7, 0.71e-7])
        q = pts[:, :2] + eps
        counts = np.zeros(len(pts), dtype=np.int64)
        chunk = max(1, int(4_000_000 // max(len(self.corners), 1)))

        def cross2(ox, oy, px, py, qx, qy):
            return (px - ox) * (qy - oy) - (py - oy) * (qx - ox)

        for start in range(0, len(pts), chunk):
            sl = slice(start, min(start + chunk, len(pts)))
            qx = q[sl, 0][:, None]
            qy = q[sl, 1][:, None]
            d1 = cross2(a[None, :, 0], a[None, :, 1], b[None, :, 0], b[None, :, 1], qx, qy)
            d2 = cross2(b[None, :, 0], b[None, :, 1], c[None, :, 0], c[None, :, 1], qx, qy)
            d3 = cross2(c[None, :, 0], c[None, :, 1], a[None, :, 0], a[None, :, 1], qx, qy)
            hit = ((d1 > 0) & (d2 > 0) & (d3 > 0)) | ((d1 < 0) & (d2 < 0) & (d3 < 0))
            # Height of the triangle plane at (qx, qy) must exceed the query z.
            area = d1 + d2 + d3
            area = np.where(area != 0.0, area, 1.0)
            zhit = (
                d2 * a[None, :, 2] + d3 * b[None, :, 2] + d1 * c[None, :, 2]
            ) / area
            above_query = zhit > pts[sl, 2][:, None]
            counts[sl] = np.sum(hit & above_query, axis=1)
        return counts


def closest_point_on_mold(mold: MoldMesh, point) -> tuple[np.ndarray, float, int]:
    """Globally closest point on the mold surface to a single query point."""
    pts, dist, tri = mold.index.closest(np.asarray(point, dtype=np.float64).reshape(1, 3))
    return pts[0], float(dist[0]), int(tri[0])

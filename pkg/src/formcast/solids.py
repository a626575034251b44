"""Extrude the flat layout into per-material watertight STL solids.

Booleans happen in 2D per z-band (polygon clipping), then bands are extruded
and stitched. Stitching rules that keep the output manifold:

- consecutive bands with identical cross-sections merge into one prism;
- where the cross-section changes at an interface, the area covered only
  below gets an upward cap and the area covered only above a downward cap;
- every polygon ring is augmented with every stack vertex that lies on it, so
  cap boundaries and wall quads share vertices exactly (no T-junctions).
"""
from __future__ import annotations

import numpy as np
from shapely import constrained_delaunay_triangles, set_precision
from shapely.geometry import MultiPolygon, Point, Polygon, box as shapely_box
from shapely.geometry.polygon import orient
from shapely.ops import unary_union

from .errors import NonManifoldOutput
from .flatten import FlatLayout, LayerStack
from .geometry import StlDocument

_NODE_EPS = 5e-6  # a few precision-grid cells: snapped nodes sit slightly off chords
_VIA_SEGMENTS = 8
# All solid-generation booleans run on this coordinate grid; GEOS snap-rounds
# overlay output onto it, which keeps shared boundaries exactly coincident and
# collapses the near-degenerate slivers float overlays otherwise leave behind.
_GRID_MM = 1e-6


def _parts(geom) -> list[Polygon]:
    if geom is None or geom.is_empty:
        return []
    if isinstance(geom, MultiPolygon):
        return [p for p in geom.geoms if not p.is_empty]
    if isinstance(geom, Polygon):
        return [geom]
    # GeometryCollection from a difference: keep polygonal parts only.
    return [p for p in getattr(geom, "geoms", []) if isinstance(p, Polygon) and not p.is_empty]


def _geom_area(geom) -> float:
    return float(sum(p.area for p in _parts(geom)))


def _same_geom(a, b) -> bool:
    if a is b:
        return True
    ea = a is None or a.is_empty
    eb = b is None or b.is_empty
    if ea or eb:
        return ea and eb
    return bool(a.equals(b))


def _diff(a, b):
    """a minus b with None standing for the empty region."""
    if a is None or a.is_empty:
        return None
    if b is None or b.is_empty:
        return a
    return a.difference(b)


def _ring_points(geom) -> list[tuple[float, float]]:
    pts = []
    for part in _parts(geom):
        for ring in [part.exterior, *part.interiors]:
            pts.extend((float(x), float(y)) for x, y in ring.coords[:-1])
    return pts


def _augment_ring(coords: list[tuple[float, float]], pool: np.ndarray) -> list[tuple[float, float]]:
    """Insert pool points lying strictly inside ring segments, ordered along them."""
    if len(pool) == 0:
        return list(coords)
    out: list[tuple[float, float]] = []
    arr = np.asarray(coords)
    n = len(arr)
    for k in range(n):
        p = arr[k]
        q = arr[(k + 1) % n]
        out.append((float(p[0]), float(p[1])))
        seg = q - p
        L2 = float(seg @ seg)
        if L2 < 1e-24:
            continue
        t = ((pool - p) @ seg) / L2
        proj = p + t[:, None] * seg
        d2 = np.einsum("ij,ij->i", pool - proj, pool - proj)
        dp2 = np.einsum("ij,ij->i", pool - p, pool - p)
        dq2 = np.einsum("ij,ij->i", pool - q, pool - q)
        sel = (
            (t > 0.0)
            & (t < 1.0)
            & (d2 < _NODE_EPS**2)
            & (dp2 > _NODE_EPS**2)
            & (dq2 > _NODE_EPS**2)
        )
        if sel.any():
            order = np.argsort(t[sel], kind="stable")
            seen = {(float(p[0]), float(p[1])), (float(q[0]), float(q[1]))}
            for pt in pool[sel][order]:
                key = (float(pt[0]), float(pt[1]))
                if key not in seen:
                    seen.add(key)
                    out.append(key)
    return out


def _augment_polygon(part: Polygon, pool: np.ndarray) -> Polygon:
    part = orient(part, sign=1.0)
    ext = _augment_ring(list(part.exterior.coords[:-1]), pool)
    holes = [_augment_ring(list(r.coords[:-1]), pool) for r in part.interiors]
    return Polygon(ext, holes)


def _triangulate_cap(part: Polygon, z: float, upward: bool, sink: list) -> float:
    """Triangulate one polygon at height z; returns the triangulated area."""
    tris = constrained_delaunay_triangles(part)
    area = 0.0
    for tri in getattr(tris, "geoms", []):
        c = np.asarray(tri.exterior.coords[:-1], dtype=np.float64)
        if len(c) != 3:
            continue
        signed = 0.5 * (
            (c[1, 0] - c[0, 0]) * (c[2, 1] - c[0, 1])
            - (c[1, 1] - c[0, 1]) * (c[2, 0] - c[0, 0])
        )
        if abs(signed) < 1e-12:
            continue
        if (signed > 0) != upward:
            c = c[::-1]
        area += abs(signed)
        sink.append(np.column_stack([c, np.full(3, z)]))
    return area


def build_stack_solid(band_regions: list, z_levels: list[float]) -> np.ndarray:
    """Stitch per-band 2D regions into one watertight triangle soup.

    ``band_regions[b]`` is the shapely region filled by this material between
    ``z_levels[b]`` and ``z_levels[b+1]`` (None or empty means absent).
    Returns an (T, 3, 3) float array; empty when the material is absent.
    """
    groups: list[list] = []  # [geom, z0, z1]
    for b, geom in enumerate(band_regions):
        g = None if geom is None or geom.is_empty else geom
        if groups and _same_geom(groups[-1][0], g):
            groups[-1][2] = z_levels[b + 1]
        else:
            groups.append([g, z_levels[b], z_levels[b + 1]])
    if all(g is None for g, _, _ in groups):
        return np.zeros((0, 3, 3))

    # Interfaces: (below geom, above geom, z). Ends close against nothing.
    interfaces = []
    interfaces.append((None, groups[0][0], groups[0][1]))
    for (ga, _, z1), (gb, _, _) in zip(groups, groups[1:]):
        interfaces.append((ga, gb, z1))
    interfaces.append((groups[-1][0], None, groups[-1][2]))

    caps = []  # (region geom, z, upward)
    for below, above, zz in interfaces:
        up_region = _diff(below, above)
        if up_region is not None and not up_region.is_empty:
            caps.append((up_region, zz, True))
        down_region = _diff(above, below)
        if down_region is not None and not down_region.is_empty:
            caps.append((down_region, zz, False))

    # Global vertex pool: every ring vertex of every group and cap region.
    pool_set: set[tuple[float, float]] = set()
    for g, _, _ in groups:
        pool_set.update(_ring_points(g))
    for region, _, _ in caps:
        pool_set.update(_ring_points(region))
    pool = np.asarray(sorted(pool_set), dtype=np.float64) if pool_set else np.zeros((0, 2))

    sink: list[np.ndarray] = []

    for region, zz, upward in caps:
        want = _geom_area(region)
        got = 0.0
        for part in _parts(region):
            got += _triangulate_cap(_augment_polygon(part, pool), zz, upward, sink)
        if abs(got - want) > 1e-6 * max(1.0, want):
            raise NonManifoldOutput(
                f"cap at z={zz} triangulated to {got:.9f} mm^2, expected {want:.9f}"
            )

    for g, z0, z1 in groups:
        for part in _parts(g):
            part = _augment_polygon(part, pool)
            for ring in [part.exterior, *part.interiors]:
                coords = np.asarray(ring.coords[:-1], dtype=np.float64)
                n = len(coords)
                for k in range(n):
                    p = coords[k]
                    q = coords[(k + 1) % n]
                    if float((q - p) @ (q - p)) < 1e-24:
                        continue
                    a0 = (p[0], p[1], z0)
                    b0 = (q[0], q[1], z0)
                    a1 = (p[0], p[1], z1)
                    b1 = (q[0], q[1], z1)
                    sink.append(np.asarray([a0, b0, b1]))
                    sink.append(np.asarray([a0, b1, a1]))

    return np.stack(sink) if sink else np.zeros((0, 3, 3))


def generate_print_model(layout: FlatLayout, stack: LayerStack) -> dict[str, StlDocument]:
    """Produce per-material solids: substrate slab plus conductive features.

    Exposed pads are filled with conductor up to the surface they expose, so
    the materials partition the full slab volume exactly.
    """
    n = stack.band_count
    z = stack.z_levels()
    spans = {L: stack.layer_band_span(L, layout.layer_count) for L in range(layout.layer_count)}

    contribs: list[list[tuple[str, object]]] = [[] for _ in range(n)]
    for f in layout.features:
        poly = set_precision(f.polygon, _GRID_MM)
        s, e = spans[f.layer]
        for b in range(s, e):
            contribs[b].append((f.id, poly))
        if f.kind == "pad" and f.exposed:
            es, ee = stack.exposure_band_span(f.layer, layout.layer_count)
            for b in range(es, ee):
                contribs[b].append((f.id + ":exposure", poly))
    for v in layout.vias:
        circle = set_precision(
            Point(v.center).buffer(v.radius_mm, quad_segs=_VIA_SEGMENTS), _GRID_MM
        )
        s = spans[v.from_layer][0]
        e = spans[v.to_layer][1]
        for b in range(s, e):
            contribs[b].append((v.id, circle))

    rect = set_precision(
        shapely_box(0.0, 0.0, layout.sheet_width_mm, layout.sheet_height_mm), _GRID_MM
    )
    union_cache: dict[tuple, object] = {}
    sub_cache: dict[tuple, object] = {}
    cond_bands = []
    sub_bands = []
    for b in range(n):
        key = tuple(sorted(fid for fid, _ in contribs[b]))
        if key not in union_cache:
            polys = [p for _, p in sorted(contribs[b], key=lambda item: item[0])]
            union_cache[key] = unary_union(polys) if polys else None
            u = union_cache[key]
            sub_cache[key] = rect if u is None else rect.difference(u)
        cond_bands.append(union_cache[key])
        sub_bands.append(sub_cache[key])

    out: dict[str, StlDocument] = {}
    expected_total = 0.0
    for b in range(n):
        expected_total += rect.area * (z[b + 1] - z[b])
    got_total = 0.0
    for material, bands in (("substrate", sub_bands), ("conductive", cond_bands)):
        tris = build_stack_solid(bands, z)
        if len(tris) == 0:
            continue
        vol = signed_volume(tris)
        if vol <= 0:
            raise NonManifoldOutput(f"{material} solid has non-positive volume {vol}")
        expected = sum(_geom_area(g) * (z1 - z0) for g, z0, z1 in _band_spans(bands, z))
        if abs(vol - expected) > 1e-6 * max(1.0, expected):
            raise NonManifoldOutput(
                f"{material} volume {vol:.6f} mm^3 deviates from expected {expected:.6f}"
            )
        got_total += vol
        out[material] = StlDocument(vertices=tris, normals=None, name=material)
    if abs(got_total - expected_total) > 1e-6 * expected_total:
        raise NonManifoldOutput(
            f"materials sum to {got_total:.6f} mm^3, slab is {expected_total:.6f}"
        )
    return out


def _band_spans(bands, z):
    return [(g, z[b], z[b + 1]) for b, g in enumerate(bands)]


# ---------------------------------------------------------------------------
# Mesh integrity checks
# ---------------------------------------------------------------------------


def signed_volume(triangle_soup: np.ndarray) -> float:
    """Divergence-theorem volume; positive iff normals point outward."""
    t = np.asarray(triangle_soup, dtype=np.float64).reshape(-1, 3, 3)
    return float(
        np.einsum("ij,ij->i", t[:, 0], np.cross(t[:, 1], t[:, 2])).sum() / 6.0
    )


def watertight_report(doc: StlDocument) -> dict:
    """Edge-pairing check: every undirected edge must appear exactly twice,
    once in each direction. Vertices weld by exact coordinate."""
    tris = doc.vertices
    keys = {}
    directed = {}
    for tri in tris:
        pts = [tuple(v) for v in tri]
        for a, b in ((0, 1), (1, 2), (2, 0)):
            va, vb = pts[a], pts[b]
            und = (va, vb) if va <= vb else (vb, va)
            keys[und] = keys.get(und, 0) + 1
            directed[(va, vb)] = directed.get((va, vb), 0) + 1
    bad_count = {k: v for k, v in keys.items() if v != 2}
    unpaired = [
        k
        for k, v in keys.items()
        if v == 2 and (directed.get(k, 0) != 1 or directed.get((k[1], k[0]), 0) != 1)
    ]
    return {
        "edges": len(keys),
        "non_manifold_edges": len(bad_count),
        "misoriented_edges": len(unpaired),
        "watertight": not bad_count and not unpaired,
    }

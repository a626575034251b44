"""Conformal circuit model: traces as vertex paths, pads as face sets, vias.

Widths and clearances are specified and enforced in the flat (rest)
configuration: the physical artifact is printed flat and stretched afterwards,
so the printed geometry is what the rules have to protect.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from shapely.geometry import LineString, Point, box as shapely_box
from shapely.ops import unary_union

from .errors import BuriedExposure, DisconnectedPick, NotConnected, WidthTooSmall
from .geometry import SheetMesh

MIN_TRACE_WIDTH_MM = 1.5
MIN_VIA_RADIUS_MM = 0.75
DEFAULT_CLEARANCE_MM = 1.0
DEFAULT_BOUNDARY_MARGIN_MM = 5.0
TRACE_JOIN_SEGMENTS = 8  # quarter-circle resolution for round joins


@dataclass
class Trace:
    path: list[int]
    layer: int
    width_mm: float = MIN_TRACE_WIDTH_MM
    material: str = "conductive"
    id: str = ""


@dataclass
class Pad:
    faces: list[int]
    layer: int
    exposed: bool = False
    id: str = ""


@dataclass
class Via:
    vertex: int
    radius_mm: float
    from_layer: int
    to_layer: int
    id: str = ""


@dataclass
class Violation:
    kind: str  # clearance | via_unseated | boundary_margin
    subjects: list[str]
    measure_mm: float
    message: str

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "subjects": list(self.subjects),
            "measure_mm": self.measure_mm,
            "message": self.message,
        }


@dataclass
class CircuitDesign:
    layer_count: int = 1
    traces: list[Trace] = field(default_factory=list)
    pads: list[Pad] = field(default_factory=list)
    vias: list[Via] = field(default_factory=list)
    layer_colors: list[int] = field(default_factory=list)
    min_clearance_mm: float = DEFAULT_CLEARANCE_MM
    boundary_margin_mm: float = DEFAULT_BOUNDARY_MARGIN_MM
    _next_id: int = 1

    def __post_init__(self) -> None:
        if not self.layer_colors:
            self.layer_colors = list(range(self.layer_count))

    def take_id(self, prefix: str) -> str:
        fid = f"{prefix}{self._next_id}"
        self._next_id += 1
        return fid

    def feature_by_id(self, fid: str):
        for group in (self.traces, self.pads, self.vias):
            for item in group:
                if item.id == fid:
                    return item
        return None

    def remove_feature(self, fid: str) -> bool:
        for group in (self.traces, self.pads, self.vias):
            for k, item in enumerate(group):
                if item.id == fid:
                    del group[k]
                    return True
        return False


# ---------------------------------------------------------------------------
# Path completion
# ---------------------------------------------------------------------------


def complete_grid_path(sheet: SheetMesh, picks: list[int]) -> list[int]:
    """Join picked vertices with shortest grid paths.

    Between each consecutive pick pair the path walks axis steps that reduce
    the Manhattan distance; ties prefer the axis of the previous step, then
    the lower destination vertex index. Already-adjacent pairs pass through
    unchanged, so completion is idempotent.
    """
    if len(picks) == 0:
        return []
    n = sheet.vertex_count
    for p in picks:
        if not 0 <= p < n:
            raise DisconnectedPick(f"vertex index {p} out of range 0..{n - 1}")
    path = [picks[0]]
    prev_axis: int | None = None
    for target in picks[1:]:
        while path[-1] != target:
            ci, cj = sheet.vertex_ij(path[-1])
            ti, tj = sheet.vertex_ij(target)
            moves = []  # (axis, next_index)
            if ti != ci:
                moves.append((0, sheet.vertex_index(ci + (1 if ti > ci else -1), cj)))
            if tj != cj:
                moves.append((1, sheet.vertex_index(ci, cj + (1 if tj > cj else -1))))
            moves.sort(key=lambda m: (0 if m[0] == prev_axis else 1, m[1]))
            prev_axis, nxt = moves[0]
            if len(path) >= 2 and path[-2] == nxt:
                raise DisconnectedPick("path completion would backtrack")
            path.append(nxt)
    return path


def add_trace(
    design: CircuitDesign,
    sheet: SheetMesh,
    picks: list[int],
    layer: int,
    width_mm: float = MIN_TRACE_WIDTH_MM,
) -> Trace:
    """Complete the picked vertices into a grid path and append the trace."""
    if not 0 <= layer < design.layer_count:
        raise ValueError(f"layer {layer} outside 0..{design.layer_count - 1}")
    if width_mm < MIN_TRACE_WIDTH_MM:
        raise WidthTooSmall(f"width {width_mm} mm below minimum {MIN_TRACE_WIDTH_MM} mm")
    path = complete_grid_path(sheet, picks)
    if len(path) < 2:
        raise DisconnectedPick("a trace needs at least 2 distinct vertices")
    for a, b, c in zip(path, path[1:], path[2:]):
        if a == c:
            raise DisconnectedPick("trace path backtracks immediately")
    trace = Trace(path=path, layer=layer, width_mm=float(width_mm), id=design.take_id("t"))
    design.traces.append(trace)
    return trace


# ---------------------------------------------------------------------------
# Pads and vias
# ---------------------------------------------------------------------------


def _faces_connected(sheet: SheetMesh, faces: list[int]) -> bool:
    face_set = set(faces)
    if not face_set:
        return False
    nfx = sheet.nx - 1
    start = next(iter(face_set))
    seen = {start}
    stack = [start]
    while stack:
        f = stack.pop()
        fi, fj = f % nfx, f // nfx
        for di, dj in ((1, 0), (-1, 0), (0, 1), (0, -1)):
            ni, nj = fi + di, fj + dj
            if 0 <= ni < nfx and 0 <= nj < sheet.ny - 1:
                nf = nj * nfx + ni
                if nf in face_set and nf not in seen:
                    seen.add(nf)
                    stack.append(nf)
    return seen == face_set


def add_pad(
    design: CircuitDesign,
    sheet: SheetMesh,
    faces: list[int],
    layer: int,
    exposed: bool = False,
) -> Pad:
    if not 0 <= layer < design.layer_count:
        raise ValueError(f"layer {layer} outside 0..{design.layer_count - 1}")
    n_faces = (sheet.nx - 1) * (sheet.ny - 1)
    for f in faces:
        if not 0 <= f < n_faces:
            raise NotConnected(f"face index {f} out of range 0..{n_faces - 1}")
    if not _faces_connected(sheet, faces):
        raise NotConnected("pad faces must form a 4-connected region")
    if exposed and layer not in (0, design.layer_count - 1):
        raise BuriedExposure(f"layer {layer} reaches neither outer surface")
    pad = Pad(faces=sorted(faces), layer=layer, exposed=exposed, id=design.take_id("p"))
    design.pads.append(pad)
    return pad


def add_via(
    design: CircuitDesign,
    sheet: SheetMesh,
    vertex: int,
    radius_mm: float,
    from_layer: int,
    to_layer: int,
) -> Via:
    if radius_mm < MIN_VIA_RADIUS_MM:
        raise ValueError(f"via radius {radius_mm} below minimum {MIN_VIA_RADIUS_MM} mm")
    if not 0 <= from_layer < to_layer < design.layer_count:
        raise ValueError("via layer span must satisfy 0 <= from < to < layer_count")
    if not 0 <= vertex < sheet.vertex_count:
        raise ValueError(f"vertex index {vertex} out of range")
    via = Via(
        vertex=vertex,
        radius_mm=float(radius_mm),
        from_layer=from_layer,
        to_layer=to_layer,
        id=design.take_id("v"),
    )
    design.vias.append(via)
    return via


# ---------------------------------------------------------------------------
# Flat outlines and design rules
# ---------------------------------------------------------------------------


def trace_outline(sheet: SheetMesh, trace: Trace):
    """Constant-width polygon of the trace in rest space: round joins, flat caps."""
    pts = sheet.rest_positions[np.asarray(trace.path)]
    line = LineString(pts)
    return line.buffer(
        trace.width_mm / 2.0,
        quad_segs=TRACE_JOIN_SEGMENTS,
        cap_style="flat",
        join_style="round",
    )


def pad_outline(sheet: SheetMesh, pad: Pad):
    """Union of the pad's face rectangles in rest space."""
    nfx = sheet.nx - 1
    px, py = sheet.pitch
    rects = []
    for f in pad.faces:
        fi, fj = f % nfx, f // nfx
        x0 = sheet.rest_positions[sheet.vertex_index(fi, fj)]
        rects.append(shapely_box(x0[0], x0[1], x0[0] + px, x0[1] + py))
    return unary_union(rects)


def via_outline(sheet: SheetMesh, via: Via):
    c = sheet.rest_positions[via.vertex]
    return Point(c[0], c[1]).buffer(via.radius_mm, quad_segs=TRACE_JOIN_SEGMENTS)


def check_design_rules(design: CircuitDesign, sheet: SheetMesh) -> list[Violation]:
    """Report clearance, via seating and boundary-margin problems.

    Clearance is measured between offset outlines in rest space on the same
    layer; any pair of features closer than the minimum (including touching,
    distance 0) is a violation. The check is total and order-independent.
    """
    violations: list[Violation] = []
    outlines = []  # (feature id, layer, polygon)
    for trace in design.traces:
        outlines.append((trace.id, trace.layer, trace_outline(sheet, trace)))
    for pad in design.pads:
        outlines.append((pad.id, pad.layer, pad_outline(sheet, pad)))

    for a in range(len(outlines)):
        for b in range(a + 1, len(outlines)):
            id_a, layer_a, poly_a = outlines[a]
            id_b, layer_b, poly_b = outlines[b]
            if layer_a != layer_b:
                continue
            if id_a[0] == "p" and id_b[0] == "p":
                continue  # pad/pad adjacency is the designer's business
            d = poly_a.distance(poly_b)
            if d < design.min_clearance_mm:
                first, second = sorted((id_a, id_b))
                violations.append(
                    Violation(
                        kind="clearance",
                        subjects=[first, second],
                        measure_mm=float(d),
                        message=(
                            f"{first} and {second} on layer {layer_a} are "
                            f"{d:.3f} mm apart (minimum {design.min_clearance_mm} mm)"
                        ),
                    )
                )

    endpoints: dict[int, set[int]] = {}
    for trace in design.traces:
        for v in (trace.path[0], trace.path[-1]):
            endpoints.setdefault(v, set()).add(trace.layer)
    for via in design.vias:
        layers = endpoints.get(via.vertex, set())
        missing = [L for L in (via.from_layer, via.to_layer) if L not in layers]
        if missing:
            violations.append(
                Violation(
                    kind="via_unseated",
                    subjects=[via.id],
                    measure_mm=0.0,
                    message=(
                        f"{via.id} at vertex {via.vertex} has no trace endpoint on "
                        f"layer(s) {missing}"
                    ),
                )
            )

    margin = design.boundary_margin_mm
    keep_in = shapely_box(
        margin, margin, sheet.width_mm - margin, sheet.height_mm - margin
    )
    all_outlines = outlines + [(via.id, via.from_layer, via_outline(sheet, via)) for via in design.vias]
    for fid, _, poly in all_outlines:
        if not poly.within(keep_in):
            overhang = poly.difference(keep_in)
            violations.append(
                Violation(
                    kind="boundary_margin",
                    subjects=[fid],
                    measure_mm=float(overhang.area),
                    message=f"{fid} crosses the {margin} mm clamp margin",
                )
            )

    violations.sort(key=lambda v: (v.kind, v.subjects))
    return violations

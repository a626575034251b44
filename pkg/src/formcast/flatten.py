"""Pre-distortion of the formed-surface design into flat printable geometry.

The 3D to 2D mapping is the identity on vertex indices: every sheet vertex
carries both its formed position and its rest position, so flattening a trace
is just reading the rest coordinates of its path. Widths are applied in rest
space where the geometry is actually printed.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .analysis import face_area_ratios
from .circuit import CircuitDesign, check_design_rules, pad_outline, trace_outline, via_outline
from .errors import DesignRuleViolationsPresent
from .simulator import FormedSheet


@dataclass
class LayerStack:
    """Vertical build-up of the printed sheet.

    Substrate bands must share one printing layer height and the trace height
    must be an integer number of bands. Circuit layers are stacked bottom-up
    with one insulation band between consecutive layers; one spare band (when
    available) becomes the covering band that exposed pads cut through, and
    any further spare bands pad the bottom.
    """

    substrate_layer_heights_mm: list[float] = field(default_factory=lambda: [0.3, 0.3, 0.3])
    trace_height_mm: float = 0.6

    def __post_init__(self) -> None:
        if not self.substrate_layer_heights_mm:
            raise ValueError("layer stack needs at least one substrate band")
        h = self.substrate_layer_heights_mm[0]
        if any(abs(x - h) > 1e-9 for x in self.substrate_layer_heights_mm):
            raise ValueError("substrate bands must share one printing layer height")
        if h <= 0:
            raise ValueError("printing layer height must be positive")
        ratio = self.trace_height_mm / h
        if abs(ratio - round(ratio)) > 1e-9 or round(ratio) < 1:
            raise ValueError(
                f"trace height {self.trace_height_mm} mm is not a positive integer "
                f"multiple of the {h} mm printing layer height"
            )

    @property
    def band_height_mm(self) -> float:
        return self.substrate_layer_heights_mm[0]

    @property
    def band_count(self) -> int:
        return len(self.substrate_layer_heights_mm)

    @property
    def total_thickness_mm(self) -> float:
        return float(sum(self.substrate_layer_heights_mm))

    @property
    def bands_per_trace(self) -> int:
        return int(round(self.trace_height_mm / self.band_height_mm))

    def z_levels(self) -> list[float]:
        z = [0.0]
        for h in self.substrate_layer_heights_mm:
            z.append(z[-1] + h)
        return z

    def layer_band_span(self, layer: int, layer_count: int) -> tuple[int, int]:
        """Half-open band range occupied by the given circuit layer's traces."""
        t = self.bands_per_trace
        needed = layer_count * t + (layer_count - 1)
        spare = self.band_count - needed
        if spare < 0:
            raise ValueError(
                f"stack of {self.band_count} bands cannot embed {layer_count} "
                f"circuit layer(s) of {t} band(s) each"
            )
        bottom = spare - (1 if spare >= 1 else 0)
        start = bottom + layer * (t + 1)
        return start, start + t

    def exposure_band_span(self, layer: int, layer_count: int) -> tuple[int, int]:
        """Bands an exposed pad fills to reach an outer surface.

        Pads on the topmost circuit layer expose upward through the covering
        bands; pads on the bottom layer (when distinct) expose downward.
        """
        start, end = self.layer_band_span(layer, layer_count)
        if layer == layer_count - 1:
            return end, self.band_count
        if layer == 0:
            return 0, start
        return start, start  # buried layers cannot expose; empty span

    def to_dict(self) -> dict:
        return {
            "substrate_layer_heights_mm": list(self.substrate_layer_heights_mm),
            "trace_height_mm": self.trace_height_mm,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "LayerStack":
        return cls(
            substrate_layer_heights_mm=list(data["substrate_layer_heights_mm"]),
            trace_height_mm=data["trace_height_mm"],
        )


@dataclass
class FlatFeature:
    id: str
    kind: str  # trace | pad
    layer: int
    polygon: object  # shapely Polygon/MultiPolygon in rest space
    exposed: bool = False


@dataclass
class FlatVia:
    id: str
    center: tuple[float, float]
    radius_mm: float
    from_layer: int
    to_layer: int


@dataclass
class FlatLayout:
    """Pre-distorted design: 2D conductive polygons plus via cylinders."""

    sheet_width_mm: float
    sheet_height_mm: float
    margin_mm: float
    layer_count: int
    features: list[FlatFeature] = field(default_factory=list)
    vias: list[FlatVia] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "sheet_width_mm": self.sheet_width_mm,
            "sheet_height_mm": self.sheet_height_mm,
            "margin_mm": self.margin_mm,
            "layer_count": self.layer_count,
            "features": [
                {
                    "id": f.id,
                    "kind": f.kind,
                    "layer": f.layer,
                    "exposed": f.exposed,
                    "polygons": _polygon_rings(f.polygon),
                }
                for f in self.features
            ],
            "vias": [
                {
                    "id": v.id,
                    "center": [v.center[0], v.center[1]],
                    "radius_mm": v.radius_mm,
                    "from_layer": v.from_layer,
                    "to_layer": v.to_layer,
                }
                for v in self.vias
            ],
        }


def _polygon_rings(poly) -> list[dict]:
    parts = poly.geoms if poly.geom_type == "MultiPolygon" else [poly]
    out = []
    for p in parts:
        out.append(
            {
                "exterior": [[float(x), float(y)] for x, y in p.exterior.coords],
                "holes": [
                    [[float(x), float(y)] for x, y in ring.coords] for ring in p.interiors
                ],
            }
        )
    return out


def flatten_design(design: CircuitDesign, formed: FormedSheet) -> FlatLayout:
    """Map the drawn design to flat rest-space polygons.

    Requires a rule-clean design. Traces become constant-width polygons with
    round joins and flat caps; pads become the union of their face rectangles;
    vias stay analytic (center, radius, layer span) until solid generation.
    """
    sheet = formed.sheet
    violations = check_design_rules(design, sheet)
    if violations:
        raise DesignRuleViolationsPresent(violations)
    layout = FlatLayout(
        sheet_width_mm=sheet.width_mm,
        sheet_height_mm=sheet.height_mm,
        margin_mm=design.boundary_margin_mm,
        layer_count=design.layer_count,
    )
    for trace in design.traces:
        layout.features.append(
            FlatFeature(
                id=trace.id, kind="trace", layer=trace.layer,
                polygon=trace_outline(sheet, trace),
            )
        )
    for pad in design.pads:
        layout.features.append(
            FlatFeature(
                id=pad.id, kind="pad", layer=pad.layer,
                polygon=pad_outline(sheet, pad), exposed=pad.exposed,
            )
        )
    for via in design.vias:
        c = sheet.rest_positions[via.vertex]
        layout.vias.append(
            FlatVia(
                id=via.id, center=(float(c[0]), float(c[1])),
                radius_mm=via.radius_mm, from_layer=via.from_layer,
                to_layer=via.to_layer,
            )
        )
    return layout


def via_polygon(sheet, via):
    return via_outline(sheet, via)


def thickness_compensation_map(
    formed: FormedSheet,
    target_thickness_mm: float,
    min_thickness_mm: float = 0.3,
    max_thickness_mm: float = 3.0,
) -> np.ndarray:
    """Per-quad printed thickness countering the thinning from stretch.

    Under the incompressible-membrane model a face stretched to ``r`` times
    its rest area thins by ``1/r``, so printing ``target * r`` yields a
    uniform thickness after forming. Values clamp to the printable range.
    """
    if target_thickness_mm <= 0:
        raise ValueError("target thickness must be positive")
    ratios = face_area_ratios(formed.sheet)
    return np.clip(target_thickness_mm * ratios, min_thickness_mm, max_thickness_mm)

"""Project state and its canonical on-disk JSON format.

Serialization is canonical: sorted keys, fixed separators, shortest
round-trip float repr. Saving, loading and saving again yields identical
bytes, which keeps project files diff-friendly and lets tests compare states
byte for byte.
"""
from __future__ import annotations

import base64
import json
from dataclasses import dataclass, field

import numpy as np

from .circuit import CircuitDesign, Pad, Trace, Via
from .errors import FormcastError
from .flatten import FlatLayout, LayerStack, flatten_design
from .geometry import MoldMesh, SheetMesh, VertexState, build_sheet, parse_stl
from .simulator import FormedSheet, SimConfig, StageLog, simulate

SCHEMA_VERSION = 1
PROJECT_SUFFIX = ".formcast.json"


class SchemaVersionMismatch(FormcastError):
    pass


@dataclass
class SheetSpec:
    nx: int = 20
    ny: int = 20
    width_mm: float = 130.0
    height_mm: float = 130.0

    def to_dict(self) -> dict:
        return {
            "nx": self.nx,
            "ny": self.ny,
            "width_mm": self.width_mm,
            "height_mm": self.height_mm,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SheetSpec":
        return cls(nx=d["nx"], ny=d["ny"], width_mm=d["width_mm"], height_mm=d["height_mm"])


@dataclass
class Project:
    """Everything one design session owns, with derived-state caching.

    The formed-sheet and flat-layout caches are dropped whenever something
    upstream of them changes: a new mold or simulation config invalidates
    both, a circuit edit invalidates only the flat layout.
    """

    sheet_spec: SheetSpec = field(default_factory=SheetSpec)
    sim_config: SimConfig = field(default_factory=SimConfig)
    circuit: CircuitDesign = field(default_factory=lambda: CircuitDesign(layer_count=2))
    # Two circuit layers need five 0.3 mm bands: trace, gap, trace plus one
    # insulating band at the bottom of the stack.
    layer_stack: LayerStack = field(
        default_factory=lambda: LayerStack(substrate_layer_heights_mm=[0.3] * 5)
    )
    mold_stl: bytes | None = None
    formed: FormedSheet | None = None
    flat_layout: FlatLayout | None = None

    # -- mutations with cache discipline ---------------------------------

    def set_mold(self, stl_bytes: bytes) -> MoldMesh:
        mold = MoldMesh.from_stl(parse_stl(stl_bytes))
        self.mold_stl = stl_bytes
        self.formed = None
        self.flat_layout = None
        return mold

    def set_sim_config(self, config: SimConfig) -> None:
        self.sim_config = config
        self.formed = None
        self.flat_layout = None

    def set_sheet_spec(self, spec: SheetSpec) -> None:
        self.sheet_spec = spec
        self.formed = None
        self.flat_layout = None

    def invalidate_flat(self) -> None:
        self.flat_layout = None

    @property
    def mold(self) -> MoldMesh | None:
        if self.mold_stl is None:
            return None
        return MoldMesh.from_stl(parse_stl(self.mold_stl))

    def run_simulation(self) -> FormedSheet:
        self.formed = simulate(
            self.mold,
            self.sim_config,
            self.sheet_spec.nx,
            self.sheet_spec.ny,
            self.sheet_spec.width_mm,
            self.sheet_spec.height_mm,
        )
        self.flat_layout = None
        return self.formed

    def reference_sheet(self) -> SheetMesh:
        """Sheet used for circuit editing: the formed one when available."""
        if self.formed is not None:
            return self.formed.sheet
        return build_sheet(
            self.sheet_spec.nx,
            self.sheet_spec.ny,
            self.sheet_spec.width_mm,
            self.sheet_spec.height_mm,
        )

    def run_flatten(self) -> FlatLayout:
        if self.formed is None:
            raise FormcastError("no formed sheet; run the simulation first")
        self.flat_layout = flatten_design(self.circuit, self.formed)
        return self.flat_layout

    # -- serialization ----------------------------------------------------

    def to_dict(self) -> dict:
        d: dict = {
            "schema_version": SCHEMA_VERSION,
            "sheet": self.sheet_spec.to_dict(),
            "sim_config": self.sim_config.to_dict(),
            "layer_stack": self.layer_stack.to_dict(),
            "mold_stl_b64": (
                base64.b64encode(self.mold_stl).decode("ascii") if self.mold_stl else None
            ),
            "circuit": {
                "layer_count": self.circuit.layer_count,
                "layer_colors": list(self.circuit.layer_colors),
                "min_clearance_mm": self.circuit.min_clearance_mm,
                "boundary_margin_mm": self.circuit.boundary_margin_mm,
                "next_id": self.circuit._next_id,
                "traces": [
                    {
                        "id": t.id,
                        "path": [int(v) for v in t.path],
                        "layer": t.layer,
                        "width_mm": t.width_mm,
                        "material": t.material,
                    }
                    for t in self.circuit.traces
                ],
                "pads": [
                    {
                        "id": p.id,
                        "faces": [int(x) for x in p.faces],
                        "layer": p.layer,
                        "exposed": p.exposed,
                    }
                    for p in self.circuit.pads
                ],
                "vias": [
                    {
                        "id": v.id,
                        "vertex": int(v.vertex),
                        "radius_mm": v.radius_mm,
                        "from_layer": v.from_layer,
                        "to_layer": v.to_layer,
                    }
                    for v in self.circuit.vias
                ],
            },
            "formed": _formed_to_dict(self.formed) if self.formed is not None else None,
        }
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "Project":
        version = d.get("schema_version")
        if version != SCHEMA_VERSION:
            raise SchemaVersionMismatch(
                f"project schema {version!r} unsupported (expected {SCHEMA_VERSION})"
            )
        c = d["circuit"]
        circuit = CircuitDesign(
            layer_count=c["layer_count"],
            layer_colors=list(c["layer_colors"]),
            min_clearance_mm=c["min_clearance_mm"],
            boundary_margin_mm=c["boundary_margin_mm"],
            traces=[
                Trace(
                    path=list(t["path"]),
                    layer=t["layer"],
                    width_mm=t["width_mm"],
                    material=t.get("material", "conductive"),
                    id=t["id"],
                )
                for t in c["traces"]
            ],
            pads=[
                Pad(faces=list(p["faces"]), layer=p["layer"], exposed=p["exposed"], id=p["id"])
                for p in c["pads"]
            ],
            vias=[
                Via(
                    vertex=v["vertex"],
                    radius_mm=v["radius_mm"],
                    from_layer=v["from_layer"],
                    to_layer=v["to_layer"],
                    id=v["id"],
                )
                for v in c["vias"]
            ],
        )
        circuit._next_id = c.get("next_id", 1)
        project = cls(
            sheet_spec=SheetSpec.from_dict(d["sheet"]),
            sim_config=SimConfig.from_dict(d["sim_config"]),
            circuit=circuit,
            layer_stack=LayerStack.from_dict(d["layer_stack"]),
            mold_stl=base64.b64decode(d["mold_stl_b64"]) if d.get("mold_stl_b64") else None,
        )
        if d.get("formed") is not None:
            project.formed = _formed_from_dict(d["formed"], project.sheet_spec)
        return project

    def dumps(self) -> bytes:
        return canonical_json(self.to_dict())

    @classmethod
    def loads(cls, data: bytes) -> "Project":
        return cls.from_dict(json.loads(data.decode("utf-8")))

    def save(self, path) -> None:
        with open(path, "wb") as fh:
            fh.write(self.dumps())

    @classmethod
    def load(cls, path) -> "Project":
        with open(path, "rb") as fh:
            return cls.loads(fh.read())


def canonical_json(obj) -> bytes:
    """Stable bytes for a JSON-able object: sorted keys, no whitespace drift."""
    return (json.dumps(obj, sort_keys=True, separators=(",", ":"), allow_nan=False) + "\n").encode(
        "utf-8"
    )


def _formed_to_dict(formed: FormedSheet) -> dict:
    s = formed.sheet
    return {
        "sheet": {
            "nx": s.nx,
            "ny": s.ny,
            "width_mm": s.width_mm,
            "height_mm": s.height_mm,
            "positions": [float(x) for x in s.positions.ravel()],
            "vertex_state": [int(x) for x in s.vertex_state],
        },
        "stage_log": [log.to_dict() for log in formed.stage_log],
        "contact_set": [int(x) for x in formed.contact_set],
        "bed_set": [int(x) for x in formed.bed_set],
        "unreached": [int(x) for x in np.flatnonzero(formed.unreached)],
    }


def _formed_from_dict(d: dict, spec: SheetSpec) -> FormedSheet:
    sd = d["sheet"]
    sheet = build_sheet(sd["nx"], sd["ny"], sd["width_mm"], sd["height_mm"])
    sheet.positions = np.asarray(sd["positions"], dtype=np.float64).reshape(-1, 3)
    sheet.vertex_state = np.asarray(sd["vertex_state"], dtype=np.uint8)
    unreached = np.zeros(sheet.vertex_count, dtype=bool)
    unreached[np.asarray(d["unreached"], dtype=np.int64)] = True
    return FormedSheet(
        sheet=sheet,
        stage_log=[StageLog(**entry) for entry in d["stage_log"]],
        contact_set=np.asarray(d["contact_set"], dtype=np.int64),
        bed_set=np.asarray(d["bed_set"], dtype=np.int64),
        unreached=unreached,
    )

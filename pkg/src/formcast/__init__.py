"""Vacuum-formed 3D printed electronics: simulate, design, pre-distort, export."""

from .analysis import (
    CalibrationReport,
    ResistanceModel,
    StretchField,
    calibrate_modulus,
    compute_stretch,
    estimate_trace_resistance,
)
from .circuit import CircuitDesign, Pad, Trace, Via, add_pad, add_trace, add_via, check_design_rules
from .flatten import FlatLayout, LayerStack, flatten_design, thickness_compensation_map
from .geometry import (
    MoldMesh,
    SheetMesh,
    StlDocument,
    VertexState,
    build_sheet,
    closest_point_on_mold,
    mesh_to_stl,
    parse_stl,
    write_stl,
)
from .simulator import (
    FormedSheet,
    SimConfig,
    StageLog,
    simulate,
    spring_force,
    stage_heat,
    stage_press,
    stage_vacuum,
)
from .solids import generate_print_model

__version__ = "0.1.0"

__all__ = [
    "CalibrationReport",
    "CircuitDesign",
    "FlatLayout",
    "FormedSheet",
    "LayerStack",
    "MoldMesh",
    "Pad",
    "ResistanceModel",
    "SheetMesh",
    "SimConfig",
    "StageLog",
    "StlDocument",
    "StretchField",
    "Trace",
    "VertexState",
    "Via",
    "add_pad",
    "add_trace",
    "add_via",
    "build_sheet",
    "calibrate_modulus",
    "check_design_rules",
    "closest_point_on_mold",
    "compute_stretch",
    "estimate_trace_resistance",
    "flatten_design",
    "generate_print_model",
    "mesh_to_stl",
    "parse_stl",
    "simulate",
    "spring_force",
    "stage_heat",
    "stage_press",
    "stage_vacuum",
    "thickness_compensation_map",
    "write_stl",
]

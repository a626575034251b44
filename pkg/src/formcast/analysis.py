"""Stretch metrics, trace resistance estimation and modulus calibration."""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import MissingStretch, SimulationFailure
from .geometry import SheetMesh
from .simulator import FormedSheet, SimConfig, simulate

# Table-derived default: as-printed linear resistivity of the conductive
# trace, ohm per cm of path length at the stock 1.5 x 0.6 mm cross-section.
DEFAULT_RESISTIVITY_OHM_PER_CM = 0.024


def _edge_lengths(sheet: SheetMesh, positions: np.ndarray) -> np.ndarray:
    e = sheet.edges
    d = positions[e[:, 1]] - positions[e[:, 0]]
    return np.sqrt(np.einsum("ij,ij->i", d, d))


def _tri_area(p0: np.ndarray, p1: np.ndarray, p2: np.ndarray) -> np.ndarray:
    return 0.5 * np.linalg.norm(np.cross(p1 - p0, p2 - p0), axis=1)


def face_area_ratios(sheet: SheetMesh) -> np.ndarray:
    """Per-quad formed/rest area ratio using the parity diagonal split."""
    tris = sheet.triangulated()
    pos = sheet.positions
    rest = np.column_stack([sheet.rest_positions, np.zeros(sheet.vertex_count)])
    formed = _tri_area(pos[tris[:, 0]], pos[tris[:, 1]], pos[tris[:, 2]])
    flat = _tri_area(rest[tris[:, 0]], rest[tris[:, 1]], rest[tris[:, 2]])
    formed_q = formed[0::2] + formed[1::2]
    flat_q = flat[0::2] + flat[1::2]
    return formed_q / flat_q


@dataclass
class StretchField:
    """Per-edge stretch ratios and per-face area ratios of a formed sheet."""

    edge_stretch: np.ndarray  # lambda per sheet edge, formed/rest length
    face_area_ratio: np.ndarray  # per quad
    edges: np.ndarray  # (E, 2) vertex pairs, same order as edge_stretch
    edge_rest_mm: np.ndarray

    @property
    def min(self) -> float:
        return float(self.edge_stretch.min())

    @property
    def max(self) -> float:
        return float(self.edge_stretch.max())

    @property
    def mean(self) -> float:
        return float(self.edge_stretch.mean())

    def summary(self) -> dict:
        return {"min": self.min, "max": self.max, "mean": self.mean}

    def lookup(self) -> dict[tuple[int, int], float]:
        """Edge (lo, hi) vertex pair -> stretch ratio."""
        out = {}
        for (a, b), lam in zip(self.edges, self.edge_stretch):
            key = (int(min(a, b)), int(max(a, b)))
            out[key] = float(lam)
        return out

    def to_dict(self) -> dict:
        return {
            "edge_stretch": [float(x) for x in self.edge_stretch],
            "face_area_ratio": [float(x) for x in self.face_area_ratio],
            "summary": self.summary(),
        }


def compute_stretch(formed: FormedSheet) -> StretchField:
    """Edge stretch lambda = formed length / rest length, plus face ratios."""
    sheet = formed.sheet
    lengths = _edge_lengths(sheet, sheet.positions)
    rest = sheet.edge_rest_lengths
    return StretchField(
        edge_stretch=lengths / rest,
        face_area_ratio=face_area_ratios(sheet),
        edges=sheet.edges.copy(),
        edge_rest_mm=rest.copy(),
    )


@dataclass
class ResistanceModel:
    """Incompressible-conductor closure: stretching an element by lambda
    shrinks its cross-section by 1/lambda, so its resistance scales with
    lambda squared. Thermal annealing effects are deliberately not modeled.
    """

    base_linear_resistivity_ohm_per_cm: float = DEFAULT_RESISTIVITY_OHM_PER_CM
    scaling_exponent: int = 2

    def __post_init__(self) -> None:
        if self.base_linear_resistivity_ohm_per_cm <= 0:
            raise ValueError("base resistivity must be positive")


def estimate_trace_resistance(trace, stretch: StretchField, model: ResistanceModel) -> float:
    """Resistance in ohms: rho0 * sum(lambda^exp * rest length in cm) over path edges."""
    table: dict[tuple[int, int], tuple[float, float]] = {}
    for (a, b), lam, rest in zip(stretch.edges, stretch.edge_stretch, stretch.edge_rest_mm):
        table[(int(min(a, b)), int(max(a, b)))] = (float(lam), float(rest) / 10.0)
    total = 0.0
    for a, b in zip(trace.path, trace.path[1:]):
        key = (min(a, b), max(a, b))
        if key not in table:
            raise MissingStretch(f"no stretch value for edge {key}")
        lam, rest_cm = table[key]
        total += (lam ** model.scaling_exponent) * rest_cm
    return model.base_linear_resistivity_ohm_per_cm * total


# ---------------------------------------------------------------------------
# Calibration
# ---------------------------------------------------------------------------


@dataclass
class MeasuredSegment:
    """A measured grid path: vertex index chain plus its measured length."""

    id: str
    path: list[int]
    measured_mm: float


@dataclass
class CalibrationReport:
    multiplier: float
    residuals_mm: dict[str, float]  # per segment, simulated - measured
    objective: float
    initial_objective: float
    search_trace: list[tuple[float, float]] = field(default_factory=list)
    non_improving: bool = False
    unidentifiable: bool = False

    def to_dict(self) -> dict:
        return {
            "multiplier": self.multiplier,
            "residuals_mm": dict(self.residuals_mm),
            "objective": self.objective,
            "initial_objective": self.initial_objective,
            "search_trace": [[m, o] for m, o in self.search_trace],
            "non_improving": self.non_improving,
            "unidentifiable": self.unidentifiable,
        }


def segment_length(formed: FormedSheet, path: list[int]) -> float:
    pos = formed.sheet.positions
    p = pos[np.asarray(path, dtype=np.int64)]
    return float(np.linalg.norm(np.diff(p, axis=0), axis=1).sum())


def golden_section_min(f, lo: float, hi: float, tol: float, trace: list | None = None):
    """Scalar golden-section minimization on [lo, hi] to bracket width tol."""
    inv_phi = (math.sqrt(5.0) - 1.0) / 2.0
    a, b = min(lo, hi), max(lo, hi)
    c = b - inv_phi * (b - a)
    d = a + inv_phi * (b - a)
    fc, fd = f(c), f(d)
    if trace is not None:
        trace.extend([(c, fc), (d, fd)])
    while (b - a) > tol:
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - inv_phi * (b - a)
            fc = f(c)
            if trace is not None:
                trace.append((c, fc))
        else:
            a, c, fc = c, d, fd
            d = a + inv_phi * (b - a)
            fd = f(d)
            if trace is not None:
                trace.append((d, fd))
    x = (a + b) / 2.0
    return x


def calibrate_modulus(
    mold,
    config: SimConfig,
    measured: list[MeasuredSegment],
    nx: int,
    ny: int,
    width_mm: float = 130.0,
    height_mm: float = 130.0,
    bracket: tuple[float, float] = (0.1, 10.0),
    tol: float = 0.02,
) -> CalibrationReport:
    """Fit a scalar multiplier on the Young's modulus to measured lengths.

    Minimizes the summed squared difference between simulated and measured
    segment lengths with a golden-section search over log(multiplier) on the
    given bracket. Every objective evaluation is a full simulate() run, so
    the search is deterministic and the returned trace reproducible.
    """
    if not measured:
        raise ValueError("calibration needs at least one measured segment")

    evaluations: dict[float, tuple[float, dict[str, float]]] = {}

    def objective(multiplier: float) -> float:
        if multiplier in evaluations:
            return evaluations[multiplier][0]
        cfg = replace(config, young_modulus_pa=config.young_modulus_pa * multiplier)
        try:
            formed = simulate(mold, cfg, nx, ny, width_mm, height_mm)
        except Exception as exc:  # propagate with context
            raise SimulationFailure(f"simulate failed at multiplier {multiplier}: {exc}") from exc
        residuals = {
            seg.id: segment_length(formed, seg.path) - seg.measured_mm for seg in measured
        }
        obj = float(sum(r * r for r in residuals.values()))
        evaluations[multiplier] = (obj, residuals)
        return obj

    initial = objective(1.0)
    raw_trace: list[tuple[float, float]] = []
    lo, hi = bracket
    log_best = golden_section_min(
        lambda u: objective(math.exp(u)),
        math.log(lo),
        math.log(hi),
        tol=tol,
        trace=raw_trace,
    )
    best_mult = math.exp(log_best)
    best_obj = objective(best_mult)

    # Monotone improving subsequence of the evaluations, in evaluation order.
    search_trace: list[tuple[float, float]] = []
    best_so_far = math.inf
    for u, obj in raw_trace:
        if obj < best_so_far:
            best_so_far = obj
            search_trace.append((math.exp(u), obj))
    if best_obj < best_so_far:
        search_trace.append((best_mult, best_obj))

    objs = [obj for _, (obj, _) in evaluations.items()]
    spread = max(objs) - min(objs)
    unidentifiable = spread <= 1e-12 * max(1.0, max(objs))
    non_improving = (best_obj >= initial) and not unidentifiable

    if unidentifiable or initial <= best_obj:
        # Prefer the untouched modulus when the data cannot beat it.
        best_mult, best_obj = 1.0, initial

    return CalibrationReport(
        multiplier=best_mult,
        residuals_mm=evaluations[best_mult][1],
        objective=best_obj,
        initial_objective=initial,
        search_trace=search_trace,
        non_improving=non_improving,
        unidentifiable=unidentifiable,
    )

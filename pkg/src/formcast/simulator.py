"""Three-stage vacuum-forming simulation: heat, press, vacuum.

The sheet is a net of axial springs (k = EA/L per edge) with the total sheet
weight spread evenly over the vertices. Equilibria are found by dynamic
relaxation with kinetic damping and Barnes-style fictitious nodal masses
proportional to local stiffness: every vertex then oscillates at the same
local frequency, so one step size resolves the stiff modes well enough for
the kinetic-energy resets to drain them. Masses shape only the path to
equilibrium; the equilibrium itself is pure force balance, so the fictitious
masses never change what the stages converge to.

Contact model: touching the mold is permanent, no-slip adhesion (the vertex
is frozen where it lands). Touching the bare bed at z = 0 pins a vertex
vertically but leaves it free to slide in-plane; the no-slip assumption is
stated for the mold, and sliding on the platen is what lets a degenerate
zero-height mold reproduce the flat rest sheet exactly.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import MoldTallerThanClampTravel, ZeroRestLength
from .geometry import MoldMesh, SheetMesh, VertexState, build_sheet


@dataclass
class SimConfig:
    """Physical and numerical parameters of the forming simulation.

    ``cross_section_area_m2`` left as None means the effective per-edge area
    is ``sheet_thickness_mm`` times the transverse grid pitch, which keeps the
    spring net's stiffness scale-independent under grid refinement.

    ``suction_pressure_kpa`` is an effective forming pressure, deliberately
    above atmospheric: the elastic net cannot creep like hot thermoplastic,
    so the suction load stands in for thermal softening when dragging the
    sheet into corners. The vacuum stage additionally doubles it (up to 64x)
    whenever transport stalls, so corner bridges hovering at the tension
    limit still get pressed home.
    """

    young_modulus_pa: float = 229.6e6  # PLA at 120 C
    sheet_mass_kg: float = 0.021
    cross_section_area_m2: float | None = None
    sheet_thickness_mm: float = 1.0
    gravity_mps2: float = 9.81
    clamp_height_mm: float = 30.0
    convergence_tol: float = 1e-7  # mm of vertex motion per iteration
    max_iterations: int = 100_000
    damping: float = 0.999  # velocity retained per relaxation step
    contact_tol_mm: float = 0.1
    pull_step_mm: float = 0.5
    suction_pressure_kpa: float = 2000.0
    bed_level_tol_mm: float = 0.1  # mold contact at or below this z counts as bed
    diagonal_springs: bool = False
    press_relax_steps: int = 300
    vacuum_relax_steps: int = 30
    vacuum_max_pulls: int = 800
    vacuum_boost_max: float = 64.0
    settle_tol: float = 1e-9
    settle_max_steps: int = 60_000
    dt_safety: float = 0.3

    def __post_init__(self) -> None:
        if self.young_modulus_pa <= 0:
            raise ValueError("young_modulus_pa must be positive")
        if self.sheet_mass_kg <= 0:
            raise ValueError("sheet_mass_kg must be positive")
        if self.convergence_tol <= 0:
            raise ValueError("convergence_tol must be positive")
        if not 0.0 < self.damping <= 1.0:
            raise ValueError("damping must be in (0, 1]")
        if self.cross_section_area_m2 is not None and self.cross_section_area_m2 <= 0:
            raise ValueError("cross_section_area_m2 must be positive when given")

    def to_dict(self) -> dict:
        return {
            "young_modulus_pa": self.young_modulus_pa,
            "sheet_mass_kg": self.sheet_mass_kg,
            "cross_section_area_m2": self.cross_section_area_m2,
            "sheet_thickness_mm": self.sheet_thickness_mm,
            "gravity_mps2": self.gravity_mps2,
            "clamp_height_mm": self.clamp_height_mm,
            "convergence_tol": self.convergence_tol,
            "max_iterations": self.max_iterations,
            "damping": self.damping,
            "contact_tol_mm": self.contact_tol_mm,
            "pull_step_mm": self.pull_step_mm,
            "suction_pressure_kpa": self.suction_pressure_kpa,
            "bed_level_tol_mm": self.bed_level_tol_mm,
            "diagonal_springs": self.diagonal_springs,
            "press_relax_steps": self.press_relax_steps,
            "vacuum_relax_steps": self.vacuum_relax_steps,
            "vacuum_max_pulls": self.vacuum_max_pulls,
            "vacuum_boost_max": self.vacuum_boost_max,
            "settle_tol": self.settle_tol,
            "settle_max_steps": self.settle_max_steps,
            "dt_safety": self.dt_safety,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "SimConfig":
        return cls(**data)


@dataclass
class StageLog:
    stage: str
    iterations: int
    residual: float
    converged: bool
    adhered: int = 0
    bed_pinned: int = 0

    def to_dict(self) -> dict:
        return {
            "stage": self.stage,
            "iterations": self.iterations,
            "residual": self.residual,
            "converged": self.converged,
            "adhered": self.adhered,
            "bed_pinned": self.bed_pinned,
        }


@dataclass
class FormedSheet:
    """Result of the forming pipeline: the deformed sheet plus bookkeeping."""

    sheet: SheetMesh
    stage_log: list[StageLog]
    contact_set: np.ndarray  # sorted indices of AdheredToMold vertices
    bed_set: np.ndarray  # sorted indices of vertices pinned to the bed
    unreached: np.ndarray  # per-vertex flag: free and off-surface at the end

    @property
    def ok(self) -> bool:
        return all(log.converged for log in self.stage_log) and not bool(self.unreached.any())


def spring_force(
    rest_length_m: float, current_length_m: float, young_modulus_pa: float, area_m2: float
) -> float:
    """Axial spring force in newtons, tensile positive, with k = EA/L."""
    if rest_length_m <= 0.0:
        raise ZeroRestLength(f"rest length must be positive, got {rest_length_m}")
    k = young_modulus_pa * area_m2 / rest_length_m
    return k * (current_length_m - rest_length_m)


# ---------------------------------------------------------------------------
# Spring system and dynamic relaxation
# ---------------------------------------------------------------------------


class _SpringSystem:
    """Precomputed spring net for one sheet: edges, rest lengths, stiffnesses."""

    def __init__(self, sheet: SheetMesh, config: SimConfig):
        pitch_x, pitch_y = sheet.pitch
        edges = [sheet.edges]
        n_x_edges = (sheet.nx - 1) * sheet.ny
        rest = [sheet.edge_rest_lengths]
        t_m = config.sheet_thickness_mm * 1e-3
        if config.cross_section_area_m2 is not None:
            area_x = area_y = area_d = config.cross_section_area_m2
        else:
            area_x = t_m * pitch_y * 1e-3
            area_y = t_m * pitch_x * 1e-3
            area_d = t_m * (pitch_x + pitch_y) / 2.0 * 1e-3
        k_x = config.young_modulus_pa * area_x / (pitch_x * 1e-3)
        k_y = config.young_modulus_pa * area_y / (pitch_y * 1e-3)
        k = [np.concatenate([np.full(n_x_edges, k_x), np.full(len(sheet.edges) - n_x_edges, k_y)])]

        if config.diagonal_springs:
            nx, ny = sheet.nx, sheet.ny
            ii, jj = np.meshgrid(np.arange(nx - 1), np.arange(ny - 1), indexing="xy")
            a = jj.ravel() * nx + ii.ravel()
            diag = np.concatenate(
                [np.stack([a, a + nx + 1], axis=1), np.stack([a + 1, a + nx], axis=1)]
            )
            edges.append(diag)
            d_len = float(np.hypot(pitch_x, pitch_y))
            rest.append(np.full(len(diag), d_len))
            k.append(np.full(len(diag), config.young_modulus_pa * area_d / (d_len * 1e-3)))

        self.edges = np.concatenate(edges)
        self.rest_mm = np.concatenate(rest)
        self.k_npm = np.concatenate(k)
        self.n_vertices = sheet.vertex_count
        k_local = np.zeros(self.n_vertices)
        np.add.at(k_local, self.edges[:, 0], self.k_npm)
        np.add.at(k_local, self.edges[:, 1], self.k_npm)
        self.fict_mass = k_local
        # omega_i = sqrt(2 k_local / m_i) = sqrt(2) for every vertex.
        self.dt = config.dt_safety * 2.0 / np.sqrt(2.0)
        self._damping = config.damping
        # Flattened scatter indices: one bincount over 3E entries per endpoint.
        axes = np.arange(3)
        self._flat0 = (self.edges[:, 0][:, None] * 3 + axes).ravel()
        self._flat1 = (self.edges[:, 1][:, None] * 3 + axes).ravel()

    def forces(self, pos_mm: np.ndarray) -> np.ndarray:
        """Per-vertex spring force in newtons for positions in mm."""
        e0, e1 = self.edges[:, 0], self.edges[:, 1]
        d = pos_mm[e1] - pos_mm[e0]
        length = np.sqrt(np.einsum("ij,ij->i", d, d))
        safe = np.where(length > 1e-12, length, 1.0)
        scale = self.k_npm * (length - self.rest_mm) * 1e-3 / safe
        fv = (scale[:, None] * d).ravel()
        n3 = self.n_vertices * 3
        out = np.bincount(self._flat0, weights=fv, minlength=n3)
        out -= np.bincount(self._flat1, weights=fv, minlength=n3)
        return out.reshape(self.n_vertices, 3)

    def relax(
        self,
        pos: np.ndarray,
        dof: np.ndarray,
        gravity_n: float,
        max_steps: int,
        tol_mm: float,
        post_step=None,
        extra_force=None,
        step_cap_mm: float | None = None,
    ) -> tuple[int, float, bool]:
        """Dynamic relaxation toward static equilibrium.

        ``pos`` is modified in place. ``dof`` is an (N, 3) 0/1 multiplier that
        freezes individual coordinates. ``gravity_n`` is the -z load per
        vertex in newtons; ``extra_force(pos, f)`` may add further loads in
        place. ``post_step(pos, v)`` may project positions and must kill the
        velocity it cancels. ``step_cap_mm`` bounds per-step vertex travel,
        which keeps strong transport loads from overshooting contact.
        Terminates when the largest actual vertex motion stays below
        ``tol_mm`` over a trailing window long enough that the slow velocity
        rebuild after a kinetic-energy reset cannot fake quiescence.
        """
        v = np.zeros_like(pos)
        dt = self.dt
        # In mm units the 1000 from N -> mm cancels against mm -> m inside the
        # force, leaving an effective stiffness/mass ratio of k_local/fict_mass.
        inv_m = (dt * 1000.0 / self.fict_mass)[:, None]
        v_cap = step_cap_mm / dt if step_cap_mm else None
        ke_prev = 0.0
        window = np.full(40, np.inf)
        steps = 0
        resid = np.inf
        for steps in range(1, max_steps + 1):
            f = self.forces(pos)
            if gravity_n:
                f[:, 2] -= gravity_n
            if extra_force is not None:
                extra_force(pos, f)
            v += inv_m * f
            v *= self._damping
            v *= dof
            if v_cap is not None:
                speed = np.sqrt(np.einsum("ij,ij->i", v, v))
                fast = speed > v_cap
                if fast.any():
                    v[fast] *= (v_cap / speed[fast])[:, None]
            prev = pos.copy()
            pos += dt * v
            if post_step is not None:
                post_step(pos, v)
            ke = float(np.einsum("ij,ij->", v, v))
            if ke < ke_prev:
                v[:] = 0.0
                ke = 0.0
            ke_prev = ke
            resid = float(np.abs(pos - prev).max()) if len(pos) else 0.0
            window[steps % len(window)] = resid
            if window.max() < tol_mm:
                return steps, resid, True
        return steps, resid, False


# ---------------------------------------------------------------------------
# Contact helpers
# ---------------------------------------------------------------------------


class _Contact:
    """Nearest-surface queries against mold plus bed for a set of points."""

    def __init__(self, mold: MoldMesh | None, config: SimConfig):
        self.mold = mold
        self.index = mold.index if mold is not None else None
        self.bed_tol = config.bed_level_tol_mm

    def nearest(self, pts: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Returns (surface points, distances, on_mold flag).

        ``on_mold`` is True where the nearest surface is mold geometry above
        the bed tolerance; the bed wins ties so flat regions keep their xy.
        """
        bed_pts = pts.copy()
        bed_pts[:, 2] = 0.0
        bed_dist = np.abs(pts[:, 2])
        if self.index is None:
            return bed_pts, bed_dist, np.zeros(len(pts), dtype=bool)
        mold_pts, mold_dist, _ = self.index.closest(pts)
        use_mold = mold_dist < bed_dist
        surf = np.where(use_mold[:, None], mold_pts, bed_pts)
        dist = np.where(use_mold, mold_dist, bed_dist)
        on_mold = use_mold & (surf[:, 2] > self.bed_tol)
        return surf, dist, on_mold

    def inside_mold(self, pts: np.ndarray) -> np.ndarray:
        if self.index is None:
            return np.zeros(len(pts), dtype=bool)
        return self.index.contains(pts) & (pts[:, 2] >= 0.0)


def _dof_for(
    sheet: SheetMesh,
    z_pinned: np.ndarray | None = None,
    wedged: np.ndarray | None = None,
) -> np.ndarray:
    dof = np.ones((sheet.vertex_count, 3))
    fixed = sheet.vertex_state != VertexState.FREE
    dof[fixed] = 0.0
    if z_pinned is not None:
        dof[z_pinned, 2] = 0.0
    if wedged is not None:
        dof[wedged] = 0.0
    return dof


def _neighbor_map(sheet: SheetMesh) -> list[list[tuple[int, float]]]:
    nbrs: list[list[tuple[int, float]]] = [[] for _ in range(sheet.vertex_count)]
    for (a, b), rest in zip(sheet.edges, sheet.edge_rest_lengths):
        nbrs[a].append((int(b), float(rest)))
        nbrs[b].append((int(a), float(rest)))
    return nbrs


def _guarded_adhere(
    sheet: SheetMesh,
    nbrs: list[list[tuple[int, float]]],
    idx: np.ndarray,
    surf: np.ndarray,
    wedged: np.ndarray | None = None,
) -> None:
    """Freeze candidates onto the mold unless that would compress an edge.

    Adhering a vertex whose landing point sits closer than the rest length to
    an already-frozen neighbor would lock compression into the contact set;
    physically that material surplus wrinkles instead of bonding flat. With a
    ``wedged`` mask the refused vertex is immobilized in place as wrinkle
    material pressed against the wall (but not counted as mold contact);
    otherwise it stays free. Candidates are processed in ascending index
    order so batch captures stay deterministic.
    """
    order = np.argsort(idx, kind="stable")
    for k in order:
        v = int(idx[k])
        p = surf[k]
        ok = True
        for nb, rest in nbrs[v]:
            if sheet.vertex_state[nb] == VertexState.ADHERED_TO_MOLD:
                d = sheet.positions[nb] - p
                if float(np.sqrt(d @ d)) < rest * (1.0 - 1e-9):
                    ok = False
                    break
        if ok:
            sheet.vertex_state[v] = VertexState.ADHERED_TO_MOLD
        elif wedged is not None:
            wedged[v] = True


def _fix_penetration(
    sheet: SheetMesh,
    contact: _Contact,
    config: SimConfig,
    nbrs: list[list[tuple[int, float]]],
    wedged: np.ndarray | None = None,
) -> int:
    """Project vertices caught inside the mold back to its surface.

    Contact points above the bed tolerance adhere (the vacuum presses the
    sheet against the wall it was sliding into) unless adhesion would lock in
    compression; bed-level contacts stay free. Returns the number of vertices
    that moved more than a hair.
    """
    if contact.index is None:
        return 0
    free = sheet.vertex_state == VertexState.FREE
    if wedged is not None:
        free &= ~wedged
    idx = np.flatnonzero(free)
    if len(idx) == 0:
        return 0
    pts = sheet.positions[idx]
    lo, hi = contact.mold.bounds
    near = (
        (pts[:, 0] > lo[0])
        & (pts[:, 0] < hi[0])
        & (pts[:, 1] > lo[1])
        & (pts[:, 1] < hi[1])
        & (pts[:, 2] < hi[2])
    )
    idx = idx[near]
    if len(idx) == 0:
        return 0
    inside = contact.inside_mold(sheet.positions[idx])
    if not inside.any():
        return 0
    fix = idx[inside]
    surf, dist, _ = contact.index.closest(sheet.positions[fix])
    moved = int((dist > config.contact_tol_mm * 1e-3).sum())
    sheet.positions[fix] = surf
    on_mold = surf[:, 2] > config.bed_level_tol_mm
    if on_mold.any():
        _guarded_adhere(sheet, nbrs, fix[on_mold], surf[on_mold], wedged)
    return moved


def _apply_mold_contact(
    sheet: SheetMesh,
    contact: _Contact,
    config: SimConfig,
    nbrs: list[list[tuple[int, float]]],
) -> None:
    """Adhere free vertices that reached the mold; project penetrators out."""
    if contact.index is None:
        return
    free_idx = np.flatnonzero(sheet.vertex_state == VertexState.FREE)
    if len(free_idx) == 0:
        return
    pts = sheet.positions[free_idx]
    lo, hi = contact.mold.bounds
    margin = config.contact_tol_mm + config.pull_step_mm
    near = (
        (pts[:, 0] > lo[0] - margin)
        & (pts[:, 0] < hi[0] + margin)
        & (pts[:, 1] > lo[1] - margin)
        & (pts[:, 1] < hi[1] + margin)
        & (pts[:, 2] < hi[2] + margin)
    )
    if not near.any():
        return
    idx = free_idx[near]
    pts = pts[near]
    surf, dist, _ = contact.index.closest(pts)
    hit = (dist <= config.contact_tol_mm) | contact.inside_mold(pts)
    if not hit.any():
        return
    idx, surf = idx[hit], surf[hit]
    sheet.positions[idx] = surf
    on_mold = surf[:, 2] > config.bed_level_tol_mm
    if on_mold.any():
        _guarded_adhere(sheet, nbrs, idx[on_mold], surf[on_mold])


# ---------------------------------------------------------------------------
# Stages
# ---------------------------------------------------------------------------


def stage_heat(sheet: SheetMesh, config: SimConfig) -> tuple[SheetMesh, StageLog]:
    """Thermal sag: boundary anchored in XYZ, interior settles under gravity.

    The mold is ignored here, as in the physical process where heating happens
    with the frame raised well clear of the mold.
    """
    sheet = sheet.copy()
    system = _SpringSystem(sheet, config)
    gravity_n = config.sheet_mass_kg * config.gravity_mps2 / sheet.vertex_count
    dof = _dof_for(sheet)
    steps, resid, converged = system.relax(
        sheet.positions, dof, gravity_n, config.max_iterations, config.convergence_tol
    )
    return sheet, StageLog("heat", steps, resid, converged)


def stage_press(
    sheet: SheetMesh, mold: MoldMesh | None, config: SimConfig
) -> tuple[SheetMesh, StageLog]:
    """Lower the clamp frame to the bed in quasi-static increments.

    Between increments the whole free sheet translates with the frame, mold
    contacts adhere permanently, and the spring net re-relaxes under gravity.
    Boundary vertices keep their rest XY and track the frame height exactly.
    """
    sheet = sheet.copy()
    boundary = sheet.vertex_state == VertexState.CLAMPED_EDGE
    clamp_z0 = float(sheet.positions[boundary, 2].max()) if boundary.any() else 0.0
    if mold is not None and mold.bounds[1, 2] > clamp_z0 + 1e-9:
        raise MoldTallerThanClampTravel(
            f"mold top {mold.bounds[1, 2]:.3f} mm above clamp start {clamp_z0:.3f} mm"
        )

    system = _SpringSystem(sheet, config)
    contact = _Contact(mold, config)
    nbrs = _neighbor_map(sheet)
    gravity_n = config.sheet_mass_kg * config.gravity_mps2 / sheet.vertex_count

    def clamp_bed(pos: np.ndarray, v: np.ndarray) -> None:
        below = pos[:, 2] < 0.0
        if below.any():
            pos[below, 2] = 0.0
            v[below, 2] = 0.0

    n_inc = int(np.ceil(clamp_z0 / config.pull_step_mm)) if clamp_z0 > 0 else 0
    total_steps = 0
    resid = 0.0
    converged = True
    for inc in range(1, n_inc + 2):
        if inc <= n_inc:
            z_c = max(0.0, clamp_z0 - inc * config.pull_step_mm)
            dz = (clamp_z0 - (inc - 1) * config.pull_step_mm) - z_c
            free = sheet.vertex_state == VertexState.FREE
            sheet.positions[free, 2] -= dz
            sheet.positions[boundary, 2] = z_c
            np.maximum(sheet.positions[:, 2], 0.0, out=sheet.positions[:, 2])
        _apply_mold_contact(sheet, contact, config, nbrs)
        dof = _dof_for(sheet)
        last = inc == n_inc + 1
        steps, resid, conv = system.relax(
            sheet.positions,
            dof,
            gravity_n,
            config.max_iterations if last else config.press_relax_steps,
            config.convergence_tol,
            post_step=clamp_bed,
        )
        total_steps += steps
        if last:
            converged = conv
    _apply_mold_contact(sheet, contact, config, nbrs)
    adhered = int((sheet.vertex_state == VertexState.ADHERED_TO_MOLD).sum())
    return sheet, StageLog("press", total_steps, resid, converged, adhered=adhered)


def stage_vacuum(
    sheet: SheetMesh,
    mold: MoldMesh | None,
    config: SimConfig,
    prior_logs: list[StageLog] | None = None,
) -> FormedSheet:
    """Suck every free vertex toward the mold-or-bed surface, springs only.

    Each free vertex carries a constant suction load (effective pressure
    times its grid cell area) toward its nearest surface point; targets are
    refreshed every few relaxation steps so capture and penetration checks
    stay current. Mold contact adheres permanently; bed contact pins the
    vertex vertically but lets it slide in-plane. Suction doubles whenever
    transport stalls so corner bridges at the tension limit get pressed home,
    then a fine settle pass brings the final state to equilibrium.
    """
    sheet = sheet.copy()
    system = _SpringSystem(sheet, config)
    contact = _Contact(mold, config)
    nbrs = _neighbor_map(sheet)
    n = sheet.vertex_count
    wedged = np.zeros(n, dtype=bool)
    pitch_x, pitch_y = sheet.pitch
    base_pull = config.suction_pressure_kpa * 1e3 * (pitch_x * 1e-3) * (pitch_y * 1e-3)
    pull_n = base_pull

    def clamp_bed(pos: np.ndarray, v: np.ndarray) -> None:
        below = pos[:, 2] < 0.0
        if below.any():
            pos[below, 2] = 0.0
            v[below, 2] = 0.0

    targets = sheet.positions.copy()
    toward_bed = np.zeros(n, dtype=bool)
    suction_idx = np.zeros(0, dtype=np.int64)

    def refresh_targets(wedge_on_refusal: bool = False) -> float:
        """Capture mold contacts, fix penetration, retarget the suction load.

        Returns the largest remaining surface distance of un-anchored free
        vertices (0 once everything adhered or rests within tolerance). Bed
        contact never anchors: the bed load is purely vertical, so resting
        vertices keep sliding in-plane toward their spring equilibrium.
        Guard-refused mold contacts stay mobile during transport (they keep
        tucking tighter as suction ramps) and only wedge during the settle
        phase, where immobilizing them is what lets the state go quiet.
        """
        nonlocal suction_idx
        wedge = wedged if wedge_on_refusal else None
        _fix_penetration(sheet, contact, config, nbrs, wedge)
        active = (sheet.vertex_state == VertexState.FREE) & ~wedged
        idx = np.flatnonzero(active)
        if len(idx) == 0:
            suction_idx = idx
            return 0.0
        surf, dist, on_mold = contact.nearest(sheet.positions[idx])
        mold_hit = (dist <= config.contact_tol_mm) & on_mold
        if mold_hit.any():
            sheet.positions[idx[mold_hit]] = surf[mold_hit]
            _guarded_adhere(sheet, nbrs, idx[mold_hit], surf[mold_hit], wedge)
        still = (sheet.vertex_state[idx] == VertexState.FREE) & ~wedged[idx]
        suction_idx = idx[still]
        targets[suction_idx] = surf[still]
        toward_bed[suction_idx] = ~on_mold[still]
        off = still & (dist > config.contact_tol_mm)
        return float(dist[off].max()) if off.any() else 0.0

    def suction(pos: np.ndarray, f: np.ndarray) -> None:
        if len(suction_idx) == 0:
            return
        d = targets[suction_idx] - pos[suction_idx]
        # Bed-directed suction acts straight down on the current position;
        # anything else would tether sliding vertices to stale xy targets.
        bed = toward_bed[suction_idx]
        d[bed, 0] = 0.0
        d[bed, 1] = 0.0
        d[bed, 2] = -pos[suction_idx][bed, 2]
        dist = np.sqrt(np.einsum("ij,ij->i", d, d))
        # Tapering inside the contact tolerance gives a smooth equilibrium at
        # the surface instead of chatter around the target point.
        safe = np.where(dist > 0.0, dist, 1.0)
        scale = pull_n * np.minimum(1.0, dist / config.contact_tol_mm) / safe
        f[suction_idx] += scale[:, None] * d

    total_steps = 0
    resid = np.inf
    converged = False
    boost = 1.0
    stall_tol = config.contact_tol_mm / 10.0
    for _ in range(config.vacuum_max_pulls):
        remaining = refresh_targets()
        if remaining <= config.contact_tol_mm:
            converged = True
            break
        before = sheet.positions.copy()
        dof = _dof_for(sheet, wedged=wedged)
        steps, _, _ = system.relax(
            sheet.positions, dof, 0.0, config.vacuum_relax_steps,
            config.convergence_tol, post_step=clamp_bed, extra_force=suction,
            step_cap_mm=config.pull_step_mm,
        )
        total_steps += steps
        free = sheet.vertex_state == VertexState.FREE
        resid = float(np.abs((sheet.positions - before)[free]).max()) if free.any() else 0.0
        if resid < stall_tol:
            # Transport exhausted at this suction level.
            if boost >= config.vacuum_boost_max:
                break
            boost *= 2.0
            pull_n = base_pull * boost

    # Fine settle: short rounds with fresh targets, suction held at the final
    # level, until capture, penetration fixes and motion all go quiet.
    settle_conv = False
    settle_resid = 0.0
    budget = config.settle_max_steps
    while budget > 0:
        states_before = sheet.vertex_state.copy()
        wedged_before = wedged.copy()
        refresh_targets(wedge_on_refusal=True)
        captured = bool(
            (sheet.vertex_state != states_before).any() or (wedged != wedged_before).any()
        )
        dof = _dof_for(sheet, wedged=wedged)
        steps, settle_resid, settle_conv = system.relax(
            sheet.positions, dof, 0.0, min(400, budget), config.settle_tol,
            post_step=clamp_bed, extra_force=suction,
            step_cap_mm=config.pull_step_mm,
        )
        total_steps += steps
        budget -= steps
        moved = _fix_penetration(sheet, contact, config, nbrs, wedged)
        if settle_conv and moved == 0 and not captured:
            break

    free_idx = np.flatnonzero(sheet.vertex_state == VertexState.FREE)
    unreached = np.zeros(n, dtype=bool)
    if len(free_idx):
        _, dist, _ = contact.nearest(sheet.positions[free_idx])
        unreached[free_idx] = dist > config.contact_tol_mm
    converged = converged and settle_conv and not bool(unreached.any())

    adhered_idx = np.flatnonzero(sheet.vertex_state == VertexState.ADHERED_TO_MOLD)
    on_bed = (sheet.vertex_state == VertexState.FREE) & (
        sheet.positions[:, 2] <= config.contact_tol_mm
    )
    bed_idx = np.flatnonzero(on_bed)
    log = StageLog(
        "vacuum",
        total_steps,
        max(resid if np.isfinite(resid) else 0.0, settle_resid),
        converged,
        adhered=len(adhered_idx),
        bed_pinned=len(bed_idx),
    )
    logs = list(prior_logs or []) + [log]
    return FormedSheet(
        sheet=sheet,
        stage_log=logs,
        contact_set=adhered_idx,
        bed_set=bed_idx,
        unreached=unreached,
    )


def simulate(
    mold: MoldMesh | None,
    config: SimConfig,
    nx: int,
    ny: int,
    width_mm: float = 130.0,
    height_mm: float = 130.0,
) -> FormedSheet:
    """Run heat, press and vacuum on a fresh sheet and collect stage logs."""
    sheet = build_sheet(nx, ny, width_mm, height_mm, clamp_height_mm=config.clamp_height_mm)
    if mold is not None:
        mold.check_footprint(width_mm, height_mm)
        if mold.bounds[1, 2] > config.clamp_height_mm + 1e-9:
            raise MoldTallerThanClampTravel(
                f"mold top {mold.bounds[1, 2]:.3f} mm above clamp height "
                f"{config.clamp_height_mm:.3f} mm"
            )
    heated, heat_log = stage_heat(sheet, config)
    pressed, press_log = stage_press(heated, mold, config)
    return stage_vacuum(pressed, mold, config, prior_logs=[heat_log, press_log])

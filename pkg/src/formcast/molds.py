"""Parametric mold fixtures for tests, demos and the CLI.

Every generator returns a MoldMesh resting on the z = 0 bed plane, open at the
bottom (the bed closes the solid implicitly). Footprints default to the center
of a 130 x 130 mm sheet.
"""
from __future__ import annotations

import math

import numpy as np

from .geometry import MoldMesh

SHEET_CENTER = (65.0, 65.0)


def _mesh(vertices, triangles) -> MoldMesh:
    return MoldMesh(
        vertices=np.asarray(vertices, dtype=np.float64),
        triangles=np.asarray(triangles, dtype=np.int64),
    )


def flat_plate(width: float = 40.0, depth: float = 40.0, center=SHEET_CENTER) -> MoldMesh:
    """Zero-height plate on the bed; forming over it is the identity."""
    cx, cy = center
    hw, hd = width / 2.0, depth / 2.0
    v = [
        (cx - hw, cy - hd, 0.0),
        (cx + hw, cy - hd, 0.0),
        (cx + hw, cy + hd, 0.0),
        (cx - hw, cy + hd, 0.0),
    ]
    return _mesh(v, [(0, 1, 2), (0, 2, 3)])


def box(width: float, depth: float, height: float, center=SHEET_CENTER) -> MoldMesh:
    """Axis-aligned box, open bottom: top face plus four walls."""
    cx, cy = center
    hw, hd = width / 2.0, depth / 2.0
    lo = [(cx - hw, cy - hd, 0.0), (cx + hw, cy - hd, 0.0), (cx + hw, cy + hd, 0.0), (cx - hw, cy + hd, 0.0)]
    hi = [(x, y, height) for x, y, _ in lo]
    v = lo + hi
    tris = [
        (4, 5, 6), (4, 6, 7),  # top
        (0, 1, 5), (0, 5, 4),  # y- wall
        (1, 2, 6), (1, 6, 5),  # x+ wall
        (2, 3, 7), (2, 7, 6),  # y+ wall
        (3, 0, 4), (3, 4, 7),  # x- wall
    ]
    return _mesh(v, tris)


def frustum(
    draft_deg: float,
    height: float,
    top_width: float,
    top_depth: float | None = None,
    center=SHEET_CENTER,
) -> MoldMesh:
    """Rectangular frustum with the given draft angle (degrees from vertical).

    The top plateau is ``top_width x top_depth``; the base grows by
    ``height * tan(draft)`` on every side.
    """
    if top_depth is None:
        top_depth = top_width
    cx, cy = center
    grow = height * math.tan(math.radians(draft_deg))
    bw, bd = top_width / 2.0 + grow, top_depth / 2.0 + grow
    tw, td = top_width / 2.0, top_depth / 2.0
    lo = [(cx - bw, cy - bd, 0.0), (cx + bw, cy - bd, 0.0), (cx + bw, cy + bd, 0.0), (cx - bw, cy + bd, 0.0)]
    hi = [(cx - tw, cy - td, height), (cx + tw, cy - td, height), (cx + tw, cy + td, height), (cx - tw, cy + td, height)]
    v = lo + hi
    tris = [
        (4, 5, 6), (4, 6, 7),
        (0, 1, 5), (0, 5, 4),
        (1, 2, 6), (1, 6, 5),
        (2, 3, 7), (2, 7, 6),
        (3, 0, 4), (3, 4, 7),
    ]
    return _mesh(v, tris)


def paper_frustum() -> MoldMesh:
    """30 x 30 x 15 mm mold with a 10 degree draft (the calibration shape)."""
    grow = 15.0 * math.tan(math.radians(10.0))
    return frustum(draft_deg=10.0, height=15.0, top_width=30.0 - 2.0 * grow)


def hemisphere(
    radius: float = 25.0,
    center=SHEET_CENTER,
    n_theta: int = 32,
    n_rings: int = 16,
) -> MoldMesh:
    """Open dome of the given radius resting on the bed."""
    cx, cy = center
    verts = [(cx, cy, radius)]  # apex
    for r in range(1, n_rings + 1):
        phi = (math.pi / 2.0) * r / n_rings  # 0 at apex, pi/2 at equator
        z = radius * math.cos(phi)
        rho = radius * math.sin(phi)
        for t in range(n_theta):
            ang = 2.0 * math.pi * t / n_theta
            verts.append((cx + rho * math.cos(ang), cy + rho * math.sin(ang), z))

    def ring(r: int, t: int) -> int:
        return 1 + (r - 1) * n_theta + (t % n_theta)

    tris = []
    for t in range(n_theta):
        tris.append((0, ring(1, t), ring(1, t + 1)))
    for r in range(1, n_rings):
        for t in range(n_theta):
            a, b = ring(r, t), ring(r, t + 1)
            c, d = ring(r + 1, t), ring(r + 1, t + 1)
            tris.append((a, c, d))
            tris.append((a, d, b))
    return _mesh(verts, tris)


def concave_box(
    outer_width: float = 70.0,
    outer_depth: float = 70.0,
    height: float = 12.0,
    pocket_width: float = 40.0,
    pocket_depth: float = 40.0,
    pocket_drop: float = 9.0,
    center=SHEET_CENTER,
) -> MoldMesh:
    """Box with a rectangular pocket sunk into its top face.

    The pocket floor sits at ``height - pocket_drop``; the sheet has to be
    pulled down into the cavity during the vacuum stage.
    """
    if pocket_drop >= height:
        raise ValueError("pocket must not cut through the mold base")
    cx, cy = center
    ow, od = outer_width / 2.0, outer_depth / 2.0
    pw, pd = pocket_width / 2.0, pocket_depth / 2.0
    zf = height - pocket_drop

    base = [(cx - ow, cy - od, 0.0), (cx + ow, cy - od, 0.0), (cx + ow, cy + od, 0.0), (cx - ow, cy + od, 0.0)]
    rim = [(x, y, height) for x, y, _ in base]
    mouth = [(cx - pw, cy - pd, height), (cx + pw, cy - pd, height), (cx + pw, cy + pd, height), (cx - pw, cy + pd, height)]
    floor = [(x, y, zf) for x, y, _ in mouth]
    v = base + rim + mouth + floor
    B, R, M, F = 0, 4, 8, 12

    tris = []
    for k in range(4):  # outer walls
        a, b = B + k, B + (k + 1) % 4
        c, d = R + k, R + (k + 1) % 4
        tris.append((a, b, d))
        tris.append((a, d, c))
    for k in range(4):  # top ring between rim and pocket mouth
        a, b = R + k, R + (k + 1) % 4
        c, d = M + k, M + (k + 1) % 4
        tris.append((a, b, d))
        tris.append((a, d, c))
    for k in range(4):  # pocket walls down to the floor
        a, b = M + k, M + (k + 1) % 4
        c, d = F + k, F + (k + 1) % 4
        tris.append((a, d, b))
        tris.append((a, c, d))
    tris.append((F, F + 1, F + 2))  # pocket floor
    tris.append((F, F + 2, F + 3))
    return _mesh(v, tris)


FIXTURES = {
    "flat": flat_plate,
    "box": lambda: box(30.0, 30.0, 15.0),
    "hemisphere": hemisphere,
    "frustum10": paper_frustum,
    "frustum60": lambda: frustum(60.0, 12.0, 20.0),
    "frustum30": lambda: frustum(30.0, 12.0, 20.0),
    "frustum4": lambda: frustum(4.0, 12.0, 20.0),
    "concave": concave_box,
}


def fixture(name: str) -> MoldMesh:
    try:
        return FIXTURES[name]()
    except KeyError:
        raise KeyError(f"unknown fixture {name!r}; available: {sorted(FIXTURES)}") from None

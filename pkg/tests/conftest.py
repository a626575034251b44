"""Shared fixtures: molds, configs, and cached (session-scoped) simulations."""
from __future__ import annotations

import time
from dataclasses import dataclass, replace

import numpy as np
import pytest

import formcast as fc
from formcast import molds


@dataclass
class TimedRun:
    formed: fc.FormedSheet
    seconds: float
    mold: object


def _timed(mold, config, n) -> TimedRun:
    t0 = time.perf_counter()
    formed = fc.simulate(mold, config, n, n)
    return TimedRun(formed=formed, seconds=time.perf_counter() - t0, mold=mold)


@pytest.fixture(scope="session")
def default_config() -> fc.SimConfig:
    return fc.SimConfig()


@pytest.fixture(scope="session")
def flat_formed_13(default_config) -> TimedRun:
    return _timed(molds.fixture("flat"), default_config, 13)


@pytest.fixture(scope="session")
def box_formed_13(default_config) -> TimedRun:
    return _timed(molds.fixture("box"), default_config, 13)


@pytest.fixture(scope="session")
def hemisphere_formed_20(default_config) -> TimedRun:
    return _timed(molds.fixture("hemisphere"), default_config, 20)


@pytest.fixture(scope="session")
def hemisphere_formed_40(default_config) -> TimedRun:
    return _timed(molds.fixture("hemisphere"), default_config, 40)


@pytest.fixture(scope="session")
def frustum10_formed_40(default_config) -> TimedRun:
    return _timed(molds.fixture("frustum10"), default_config, 40)


@pytest.fixture(scope="session")
def concave_formed_40(default_config) -> TimedRun:
    return _timed(molds.fixture("concave"), default_config, 40)


@pytest.fixture(scope="session")
def draft_frustum_runs(default_config) -> dict[int, TimedRun]:
    return {
        draft: _timed(molds.fixture(f"frustum{draft}"), default_config, 30)
        for draft in (60, 30, 4)
    }


def penetration_depth(formed: fc.FormedSheet, mold) -> float:
    """Worst penetration of any vertex into the mold-plus-bed solid (mm)."""
    pts = formed.sheet.positions
    depth = float(-min(pts[:, 2].min(), 0.0))
    if mold is not None:
        inside = mold.index.contains(pts) & (pts[:, 2] >= 0.0)
        if inside.any():
            _, dist, _ = mold.index.closest(pts[inside])
            depth = max(depth, float(dist.max()))
    return depth


def contact_edge_mask(formed: fc.FormedSheet) -> np.ndarray:
    state = formed.sheet.vertex_state
    e = formed.sheet.edges
    return (state[e[:, 0]] == fc.VertexState.ADHERED_TO_MOLD) & (
        state[e[:, 1]] == fc.VertexState.ADHERED_TO_MOLD
    )

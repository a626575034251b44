"""Acceptance gate: one test per acceptance criterion, stated tolerances.

Each test prints a single PASS line when its criterion holds (run with -s or
check the captured output); assertions carry the tolerances from the project
contract, pinned here rather than deferred to calibration.
"""
import time
from dataclasses import replace

import numpy as np
import pytest

import formcast as fc
from formcast import molds
from formcast.analysis import MeasuredSegment, segment_length
from formcast.circuit import CircuitDesign, Trace, pad_outline
from formcast.flatten import LayerStack
from formcast.geometry import mesh_to_stl, write_stl, MoldMesh
from formcast.solids import generate_print_model

from conftest import contact_edge_mask, penetration_depth
from test_simulator import coordinate_descent, sheet_energy


def report(name: str) -> None:
    print(f"ACCEPTANCE {name}: PASS")


class TestEnergyOracleEquivalence:
    def test_heat_equilibrium_matches_coordinate_descent(self):
        started = time.perf_counter()
        config = fc.SimConfig(convergence_tol=1e-9)
        for n in (3, 4, 5):
            sheet = fc.build_sheet(n, n, 130, 130, clamp_height_mm=config.clamp_height_mm)
            heated, log = fc.stage_heat(sheet, config)
            assert log.converged
            free_idx = np.flatnonzero(sheet.vertex_state == fc.VertexState.FREE)
            oracle = coordinate_descent(sheet, config, heated.positions, free_idx)
            worst = float(np.abs(oracle - heated.positions).max())
            assert worst < 1e-3, f"{n}x{n} grid deviates {worst} mm from the energy oracle"
        elapsed = time.perf_counter() - started
        assert elapsed < 10.0, f"energy-oracle check took {elapsed:.1f}s"
        report(f"energy-oracle equivalence (<=5x5 within 1e-3 mm, {elapsed:.1f}s)")


class TestNonPenetration:
    def test_fixture_penetration_and_runtime(
        self, hemisphere_formed_40, frustum10_formed_40, concave_formed_40
    ):
        for name, run in (
            ("hemisphere", hemisphere_formed_40),
            ("frustum10", frustum10_formed_40),
            ("concave", concave_formed_40),
        ):
            depth = penetration_depth(run.formed, run.mold)
            assert depth <= 0.1, f"{name}: penetration {depth} mm"
            assert run.seconds < 60.0, f"{name}: simulate took {run.seconds:.1f}s"
        report("non-penetration <= 0.1 mm at n=40, each simulate < 60 s")


class TestIdentityForming:
    def test_lambda_unity(self, flat_formed_13):
        stretch = fc.compute_stretch(flat_formed_13.formed)
        assert abs(stretch.min - 1.0) <= 1e-6
        assert abs(stretch.max - 1.0) <= 1e-6
        report("identity forming: lambda = 1 +/- 1e-6 on all edges")

    def test_flatten_reproduces_drawn_geometry(self, flat_formed_13):
        formed = flat_formed_13.formed
        sheet = formed.sheet
        design = CircuitDesign(layer_count=1)
        trace = fc.add_trace(
            design, sheet, [sheet.vertex_index(2, 4), sheet.vertex_index(9, 7)], 0
        )
        nfx = sheet.nx - 1
        pad = fc.add_pad(design, sheet, [8 * nfx + 3, 8 * nfx + 4], 0)
        layout = fc.flatten_design(design, formed)
        rest_path = sheet.rest_positions[np.asarray(trace.path)]
        from shapely.geometry import LineString

        flat_trace = layout.features[0].polygon
        assert flat_trace.contains(LineString(rest_path))
        assert flat_trace.area == pytest.approx(
            float(np.linalg.norm(np.diff(rest_path, axis=0), axis=1).sum()) * trace.width_mm,
            rel=1e-9,
        )
        assert layout.features[1].polygon.equals(pad_outline(sheet, pad))
        report("identity forming: flatten reproduces drawn geometry exactly")


class TestAdhesionPermanenceAndDeterminism:
    def test_adhered_bit_identical_across_stages(self, default_config):
        mold = molds.fixture("box")
        sheet = fc.build_sheet(13, 13, 130, 130, clamp_height_mm=default_config.clamp_height_mm)
        heated, hl = fc.stage_heat(sheet, default_config)
        pressed, pl = fc.stage_press(heated, mold, default_config)
        adhered = np.flatnonzero(pressed.vertex_state == fc.VertexState.ADHERED_TO_MOLD)
        assert len(adhered) > 0
        frozen = pressed.positions[adhered].copy()
        formed = fc.stage_vacuum(pressed, mold, default_config, prior_logs=[hl, pl])
        assert np.array_equal(formed.sheet.positions[adhered], frozen)
        report("adhesion permanence: adhered vertices bit-identical across stages")

    def test_repeat_runs_byte_identical_stl(self, default_config, box_formed_13):
        again = fc.simulate(molds.fixture("box"), default_config, 13, 13)
        stl_a = write_stl(
            mesh_to_stl(
                box_formed_13.formed.sheet.positions,
                box_formed_13.formed.sheet.triangulated(),
                name="formed",
            )
        )
        stl_b = write_stl(
            mesh_to_stl(again.sheet.positions, again.sheet.triangulated(), name="formed")
        )
        assert stl_a == stl_b
        report("determinism: repeated simulate() produces byte-identical formed STL")


class TestTableTwoTrend:
    def test_resistance_ratio_ordering(self, draft_frustum_runs):
        model = fc.ResistanceModel(base_linear_resistivity_ohm_per_cm=0.024)
        ratios = {}
        for draft, run in draft_frustum_runs.items():
            formed = run.formed
            stretch = fc.compute_stretch(formed)
            n = formed.sheet.nx
            path = [(n // 2) * n + i for i in range(3, n - 3)]
            trace = Trace(path=path, layer=0)
            r_formed = fc.estimate_trace_resistance(trace, stretch, model)
            rest_cm = (
                float(
                    np.linalg.norm(
                        np.diff(formed.sheet.rest_positions[np.asarray(path)], axis=0),
                        axis=1,
                    ).sum()
                )
                / 10.0
            )
            ratios[draft] = r_formed / (0.024 * rest_cm)
        assert all(r > 1.0 for r in ratios.values()), ratios
        assert ratios[4] > ratios[30] > ratios[60], ratios
        report(
            "Table 2 trend: formed/as-printed ratios "
            f"60deg={ratios[60]:.3f} < 30deg={ratios[30]:.3f} < 4deg={ratios[4]:.3f}, all > 1"
        )


CAL_CONFIG = fc.SimConfig(suction_pressure_kpa=60.0, vacuum_boost_max=1.0)
CAL_N = 16


class TestCalibrationRecovery:
    def test_recovers_synthetic_multipliers(self):
        mold = molds.fixture("concave")
        rows = (6, 8, 9)
        paths = [[j * CAL_N + i for i in range(2, CAL_N - 2)] for j in rows]
        started = time.perf_counter()
        for true_mult in (0.7, 1.0, 1.5):
            target = replace(
                CAL_CONFIG, young_modulus_pa=CAL_CONFIG.young_modulus_pa * true_mult
            )
            synthetic = fc.simulate(mold, target, CAL_N, CAL_N)
            measured = [
                MeasuredSegment(id=f"row{j}", path=p, measured_mm=segment_length(synthetic, p))
                for j, p in zip(rows, paths)
            ]
            fit = fc.calibrate_modulus(mold, CAL_CONFIG, measured, CAL_N, CAL_N, tol=0.05)
            err = abs(fit.multiplier - true_mult) / true_mult
            assert err < 0.05, f"multiplier {true_mult}: recovered {fit.multiplier} ({err:.1%})"
        elapsed = time.perf_counter() - started
        assert elapsed < 300.0, f"calibration took {elapsed:.0f}s"
        report(f"calibration recovery: {{0.7, 1.0, 1.5}} within 5% in {elapsed:.0f}s")


class TestFabricationOutputIntegrity:
    def test_solids_and_roundtrip(self, flat_formed_13):
        formed = flat_formed_13.formed
        sheet = formed.sheet
        nfx = sheet.nx - 1
        design = CircuitDesign(layer_count=2)
        t1 = fc.add_trace(design, sheet, [sheet.vertex_index(2, 3), sheet.vertex_index(10, 3)], 0)
        fc.add_trace(design, sheet, [sheet.vertex_index(2, 6), sheet.vertex_index(10, 6)], 1, 2.0)
        fc.add_pad(design, sheet, [8 * nfx + 5, 8 * nfx + 6, 9 * nfx + 5, 9 * nfx + 6], 1, exposed=True)
        fc.add_via(design, sheet, t1.path[-1], 0.8, 0, 1)
        fc.add_trace(design, sheet, [t1.path[-1], t1.path[-1] + sheet.nx], 1)
        layout = fc.flatten_design(design, formed)
        stack = LayerStack(substrate_layer_heights_mm=[0.3] * 5)
        solids = generate_print_model(layout, stack)

        from test_solids import edge_pairing_oracle, volume_oracle

        total = 0.0
        for name, doc in solids.items():
            assert edge_pairing_oracle(doc), f"{name} not watertight/oriented"
            vol = volume_oracle(doc)
            assert vol > 0, f"{name} normals not outward"
            total += vol
            data = write_stl(doc)
            assert write_stl(fc.parse_stl(data)) == data, f"{name} STL round-trip"
        slab = 130 * 130 * stack.total_thickness_mm
        assert abs(total - slab) / slab < 1e-6

        rng = np.random.default_rng(11)
        pts = rng.uniform([5, 5, 0.01], [125, 125, 1.49], (500, 3))
        claims = {
            name: MoldMesh.from_stl(doc).index.contains(pts) & (pts[:, 2] > 0)
            for name, doc in solids.items()
        }
        assert not (claims["conductive"] & claims["substrate"]).any()
        report(
            "fabrication output: watertight, outward, interior-disjoint, "
            f"partition error {abs(total - slab) / slab:.1e}, byte round-trip"
        )


class TestRefinementStability:
    def test_hemisphere_grid_refinement(self, hemisphere_formed_20, hemisphere_formed_40):
        coarse = hemisphere_formed_20.formed.sheet
        fine = hemisphere_formed_40.formed.sheet

        def surface_of(sheet):
            return MoldMesh(vertices=sheet.positions, triangles=sheet.triangulated())

        def max_dist(points, surface):
            _, dist, _ = surface.index.closest(points)
            return float(dist.max())

        d1 = max_dist(coarse.positions, surface_of(fine))
        d2 = max_dist(fine.positions, surface_of(coarse))
        worst = max(d1, d2)
        assert worst <= 2.0, f"formed surfaces differ by {worst:.3f} mm"
        report(f"refinement stability: n=20 vs n=40 differ {worst:.3f} mm <= 2 mm")

    def test_compensated_volume_stable(self, hemisphere_formed_20, hemisphere_formed_40):
        def total_volume(run):
            sheet = run.formed.sheet
            tmap = fc.thickness_compensation_map(run.formed, 0.9, max_thickness_mm=5.0)
            px, py = sheet.pitch
            return float((tmap * px * py).sum())

        v20 = total_volume(hemisphere_formed_20)
        v40 = total_volume(hemisphere_formed_40)
        assert abs(v40 - v20) / v20 < 0.02
        report(f"thickness compensation volume stable: {abs(v40 - v20) / v20:.2%} < 2%")

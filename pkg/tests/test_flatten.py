"""Pre-distortion to the flat sheet and the layer stack arithmetic."""
import numpy as np
import pytest

import formcast as fc
from formcast.circuit import CircuitDesign
from formcast.errors import DesignRuleViolationsPresent
from formcast.flatten import LayerStack


class TestLayerStack:
    def test_defaults_match_stock_sheet(self):
        stack = LayerStack()
        assert stack.total_thickness_mm == pytest.approx(0.9)
        assert stack.bands_per_trace == 2

    def test_trace_height_must_be_band_multiple(self):
        with pytest.raises(ValueError):
            LayerStack(substrate_layer_heights_mm=[0.3, 0.3, 0.3], trace_height_mm=0.5)

    def test_uneven_bands_rejected(self):
        with pytest.raises(ValueError):
            LayerStack(substrate_layer_heights_mm=[0.3, 0.2, 0.3])

    def test_default_single_layer_spans(self):
        stack = LayerStack()
        # middle band plus the bottom band, covering band on top
        assert stack.layer_band_span(0, 1) == (0, 2)
        assert stack.exposure_band_span(0, 1) == (2, 3)

    def test_two_layer_five_band_spans(self):
        stack = LayerStack(substrate_layer_heights_mm=[0.3] * 5)
        assert stack.layer_band_span(0, 2) == (0, 2)
        assert stack.layer_band_span(1, 2) == (3, 5)
        assert stack.exposure_band_span(1, 2) == (5, 5)
        assert stack.exposure_band_span(0, 2) == (0, 0)

    def test_spare_bands_pad_bottom_after_cover(self):
        stack = LayerStack(substrate_layer_heights_mm=[0.3] * 4)
        assert stack.layer_band_span(0, 1) == (1, 3)
        assert stack.exposure_band_span(0, 1) == (3, 4)

    def test_too_thin_for_layers(self):
        stack = LayerStack()
        with pytest.raises(ValueError):
            stack.layer_band_span(1, 2)


class TestFlattenDesign:
    def test_trace_on_identity_mold_is_straight_rectangle(self, flat_formed_13):
        formed = flat_formed_13.formed
        design = CircuitDesign(layer_count=1)
        sheet = formed.sheet
        trace = fc.add_trace(design, sheet, [sheet.vertex_index(2, 6), sheet.vertex_index(10, 6)], 0)
        layout = fc.flatten_design(design, formed)
        poly = layout.features[0].polygon
        rest = sheet.rest_positions
        length = np.linalg.norm(rest[trace.path[-1]] - rest[trace.path[0]])
        assert poly.area == pytest.approx(length * 1.5, rel=1e-9)
        minx, miny, maxx, maxy = poly.bounds
        assert maxy - miny == pytest.approx(1.5, abs=1e-9)

    def test_flatten_reads_rest_positions_not_formed(self, hemisphere_formed_20):
        formed = hemisphere_formed_20.formed
        sheet = formed.sheet
        design = CircuitDesign(layer_count=1)
        n = sheet.nx
        trace = fc.add_trace(
            design, sheet, [sheet.vertex_index(3, n // 2), sheet.vertex_index(n - 4, n // 2)], 0
        )
        layout = fc.flatten_design(design, formed)
        poly = layout.features[0].polygon
        # the flat outline is the rest-grid straight band despite the dome
        rest = sheet.rest_positions[np.asarray(trace.path)]
        assert poly.contains(
            __import__("shapely.geometry", fromlist=["LineString"]).LineString(rest)
        )
        length = np.linalg.norm(rest[-1] - rest[0])
        assert poly.area == pytest.approx(length * 1.5, rel=1e-9)

    def test_roundtrip_through_vertex_correspondence(self, hemisphere_formed_20):
        formed = hemisphere_formed_20.formed
        sheet = formed.sheet
        design = CircuitDesign(layer_count=1)
        trace = fc.add_trace(design, sheet, [sheet.vertex_index(4, 4), sheet.vertex_index(12, 9)], 0)
        fc.flatten_design(design, formed)
        # flat path vertices -> formed polyline via index identity, exactly
        formed_polyline = sheet.positions[np.asarray(trace.path)]
        again = sheet.positions[np.asarray(trace.path)]
        assert np.array_equal(formed_polyline, again)

    def test_pad_two_by_two_area(self, flat_formed_13):
        formed = flat_formed_13.formed
        sheet = formed.sheet
        design = CircuitDesign(layer_count=1)
        nfx = sheet.nx - 1
        fc.add_pad(design, sheet, [5 * nfx + 5, 5 * nfx + 6, 6 * nfx + 5, 6 * nfx + 6], 0)
        layout = fc.flatten_design(design, formed)
        pitch = 130.0 / 12.0
        assert layout.features[0].polygon.area == pytest.approx(4 * pitch**2, rel=1e-9)

    def test_rule_violations_block_flatten(self, flat_formed_13):
        formed = flat_formed_13.formed
        sheet = formed.sheet
        design = CircuitDesign(layer_count=1)
        v = sheet.vertex_index(5, 5)
        fc.add_trace(design, sheet, [sheet.vertex_index(2, 5), v], 0)
        fc.add_trace(design, sheet, [v, sheet.vertex_index(5, 8)], 0)
        with pytest.raises(DesignRuleViolationsPresent) as err:
            fc.flatten_design(design, formed)
        assert len(err.value.violations) == 1

    def test_layout_serializes(self, flat_formed_13):
        formed = flat_formed_13.formed
        sheet = formed.sheet
        design = CircuitDesign(layer_count=2)
        t0 = fc.add_trace(design, sheet, [sheet.vertex_index(2, 4), sheet.vertex_index(9, 4)], 0)
        t1 = fc.add_trace(design, sheet, [t0.path[-1], t0.path[-1] + sheet.nx], 1)
        fc.add_via(design, sheet, t0.path[-1], 0.8, 0, 1)
        layout = fc.flatten_design(design, formed)
        d = layout.to_dict()
        assert {f["kind"] for f in d["features"]} == {"trace"}
        assert len(d["vias"]) == 1
        assert d["vias"][0]["center"] == [
            float(sheet.rest_positions[t0.path[-1]][0]),
            float(sheet.rest_positions[t0.path[-1]][1]),
        ]


class TestThicknessCompensation:
    def test_identity_mold_uniform(self, flat_formed_13):
        tmap = fc.thickness_compensation_map(flat_formed_13.formed, 0.9)
        assert np.allclose(tmap, 0.9, atol=1e-9)

    def test_doubled_area_doubles_thickness(self):
        from formcast.simulator import FormedSheet, StageLog

        sheet = fc.build_sheet(5, 5, 100, 100)
        stretched = np.column_stack(
            [sheet.rest_positions * np.sqrt(2.0), np.zeros(sheet.vertex_count)]
        )
        sheet.positions = stretched
        formed = FormedSheet(
            sheet=sheet,
            stage_log=[StageLog("vacuum", 0, 0.0, True)],
            contact_set=np.zeros(0, dtype=np.int64),
            bed_set=np.zeros(0, dtype=np.int64),
            unreached=np.zeros(sheet.vertex_count, dtype=bool),
        )
        tmap = fc.thickness_compensation_map(formed, 0.9, max_thickness_mm=5.0)
        assert np.allclose(tmap, 1.8, atol=1e-9)

    def test_hemisphere_follows_stretch_ordering(self, hemisphere_formed_20):
        formed = hemisphere_formed_20.formed
        tmap = fc.thickness_compensation_map(formed, 0.9, max_thickness_mm=10.0)
        stretch = fc.compute_stretch(formed)
        assert np.allclose(tmap, np.clip(0.9 * stretch.face_area_ratio, 0.3, 10.0))
        # apex faces print thicker than clamp-adjacent faces
        n = formed.sheet.nx
        apex_face = (n // 2) * (n - 1) + n // 2
        corner_face = 0
        assert tmap[apex_face] > tmap[corner_face]

    def test_clamping_range(self, hemisphere_formed_20):
        tmap = fc.thickness_compensation_map(
            hemisphere_formed_20.formed, 0.9, min_thickness_mm=0.3, max_thickness_mm=1.0
        )
        assert tmap.min() >= 0.3
        assert tmap.max() <= 1.0

    def test_rejects_bad_target(self, flat_formed_13):
        with pytest.raises(ValueError):
            fc.thickness_compensation_map(flat_formed_13.formed, 0.0)

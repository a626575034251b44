"""Printable solid generation: watertightness, orientation, volume accounting."""
import numpy as np
import pytest

import formcast as fc
from formcast.circuit import CircuitDesign
from formcast.flatten import LayerStack
from formcast.solids import generate_print_model, signed_volume, watertight_report


def volume_oracle(doc: fc.StlDocument) -> float:
    """Signed tetrahedron sum straight from the triangle soup."""
    total = 0.0
    for tri in doc.vertices:
        a, b, c = tri
        total += float(np.dot(a, np.cross(b, c))) / 6.0
    return total


def edge_pairing_oracle(doc: fc.StlDocument) -> bool:
    """Every undirected edge appears exactly twice, in opposite directions."""
    counts: dict = {}
    for tri in doc.vertices:
        pts = [tuple(v) for v in tri]
        for a, b in ((0, 1), (1, 2), (2, 0)):
            counts[(pts[a], pts[b])] = counts.get((pts[a], pts[b]), 0) + 1
    for (a, b), n in counts.items():
        if n != 1 or counts.get((b, a), 0) != 1:
            return False
    return True


@pytest.fixture(scope="module")
def identity_formed(flat_formed_13):
    return flat_formed_13.formed


def make_layout(formed, build):
    design = CircuitDesign(layer_count=build.get("layers", 1))
    sheet = formed.sheet
    for args in build.get("traces", []):
        fc.add_trace(design, sheet, *args)
    for args in build.get("pads", []):
        fc.add_pad(design, sheet, *args)
    for args in build.get("vias", []):
        fc.add_via(design, sheet, *args)
    return fc.flatten_design(design, formed)


class TestSlab:
    def test_empty_circuit_is_a_plain_slab(self, identity_formed):
        layout = make_layout(identity_formed, {})
        solids = generate_print_model(layout, LayerStack())
        assert set(solids) == {"substrate"}
        doc = solids["substrate"]
        assert len(doc) == 12
        assert volume_oracle(doc) == pytest.approx(130 * 130 * 0.9, rel=1e-12)
        assert edge_pairing_oracle(doc)

    def test_outward_orientation_against_centroid(self, identity_formed):
        layout = make_layout(identity_formed, {})
        doc = generate_print_model(layout, LayerStack())["substrate"]
        centroid = np.array([65.0, 65.0, 0.45])
        normals = doc.normals
        centers = doc.vertices.mean(axis=1)
        assert (np.einsum("ij,ij->i", normals, centers - centroid) > 0).all()


class TestSingleTrace:
    def test_volume_partition(self, identity_formed):
        sheet = identity_formed.sheet
        layout = make_layout(
            identity_formed,
            {"traces": [([sheet.vertex_index(2, 6), sheet.vertex_index(10, 6)], 0, 1.5)]},
        )
        solids = generate_print_model(layout, LayerStack())
        area = layout.features[0].polygon.area
        v_cond = volume_oracle(solids["conductive"])
        v_sub = volume_oracle(solids["substrate"])
        slab = 130 * 130 * 0.9
        assert v_cond == pytest.approx(area * 0.6, rel=1e-6)
        assert v_sub == pytest.approx(slab - area * 0.6, rel=1e-6)
        assert abs(v_cond + v_sub - slab) / slab < 1e-6

    def test_watertight_and_oriented(self, identity_formed):
        sheet = identity_formed.sheet
        layout = make_layout(
            identity_formed,
            {"traces": [([sheet.vertex_index(2, 6), sheet.vertex_index(10, 6)], 0, 1.5)]},
        )
        for doc in generate_print_model(layout, LayerStack()).values():
            assert edge_pairing_oracle(doc)
            assert signed_volume(doc.vertices) > 0


@pytest.fixture(scope="module")
def full_solids(flat_formed_13):
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
    return generate_print_model(layout, stack), stack


class TestFullDesign:

    def test_materials_partition_slab(self, full_solids):
        solids, stack = full_solids
        slab = 130 * 130 * stack.total_thickness_mm
        total = sum(volume_oracle(doc) for doc in solids.values())
        assert abs(total - slab) / slab < 1e-6

    def test_each_material_watertight(self, full_solids):
        solids, _ = full_solids
        for name, doc in solids.items():
            report = watertight_report(doc)
            assert report["watertight"], (name, report)
            assert edge_pairing_oracle(doc), name

    def test_exported_bytes_watertight(self, full_solids):
        solids, _ = full_solids
        for doc in solids.values():
            again = fc.parse_stl(fc.write_stl(doc))
            assert edge_pairing_oracle(again)

    def test_interior_disjoint_by_containment_sampling(self, full_solids):
        # sample points well inside conductive prisms; the substrate must not
        # also claim them (and vice versa) - verified via parity ray casts.
        solids, _ = full_solids
        rng = np.random.default_rng(3)
        points = rng.uniform([10, 10, 0.05], [120, 120, 1.45], (400, 3))
        inside = {}
        for name, doc in solids.items():
            mold = fc.MoldMesh.from_stl(doc)
            inside[name] = mold.index.contains(points) & (points[:, 2] > 0)
        both = inside["conductive"] & inside["substrate"]
        assert not both.any()

    def test_exposed_pad_reaches_top_surface(self, full_solids):
        solids, stack = full_solids
        top = stack.total_thickness_mm
        cond = solids["conductive"].vertices
        top_tris = np.isclose(cond[:, :, 2], top).all(axis=1)
        assert top_tris.any()  # the exposure fill caps at the sheet surface

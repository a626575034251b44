"""Project file format: canonical bytes and cache discipline."""
import json

import numpy as np
import pytest

import formcast as fc
from formcast import molds
from formcast.geometry import mesh_to_stl, write_stl
from formcast.project import Project, SchemaVersionMismatch, SheetSpec


def mold_bytes(name="flat"):
    m = molds.fixture(name)
    return write_stl(mesh_to_stl(m.vertices, m.triangles, name=name))


@pytest.fixture
def project():
    p = Project(sheet_spec=SheetSpec(nx=9, ny=9))
    p.set_mold(mold_bytes())
    return p


class TestCanonicalSerialization:
    def test_save_load_save_byte_identical(self, project, tmp_path):
        project.run_simulation()
        sheet = project.reference_sheet()
        fc.add_trace(project.circuit, sheet, [20, 24], 0)
        path = tmp_path / "demo.formcast.json"
        project.save(path)
        first = path.read_bytes()
        again = Project.load(path)
        again.save(path)
        assert path.read_bytes() == first

    def test_dumps_is_sorted_json(self, project):
        data = json.loads(project.dumps())
        assert list(data) == sorted(data)

    def test_schema_version_checked(self, project):
        blob = json.loads(project.dumps())
        blob["schema_version"] = 99
        with pytest.raises(SchemaVersionMismatch):
            Project.from_dict(blob)

    def test_formed_state_roundtrips(self, project):
        formed = project.run_simulation()
        again = Project.loads(project.dumps())
        assert np.array_equal(again.formed.sheet.positions, formed.sheet.positions)
        assert np.array_equal(again.formed.contact_set, formed.contact_set)
        assert [log.stage for log in again.formed.stage_log] == ["heat", "press", "vacuum"]

    def test_circuit_ids_stable_across_roundtrip(self, project):
        sheet = project.reference_sheet()
        t = fc.add_trace(project.circuit, sheet, [20, 22], 0)
        again = Project.loads(project.dumps())
        t2 = fc.add_trace(again.circuit, again.reference_sheet(), [40, 42], 0)
        assert t.id == "t1"
        assert t2.id == "t2"  # id counter survives the roundtrip


class TestCacheDiscipline:
    def test_new_mold_drops_caches(self, project):
        project.run_simulation()
        project.run_flatten()
        project.set_mold(mold_bytes("box"))
        assert project.formed is None
        assert project.flat_layout is None

    def test_new_config_drops_caches(self, project):
        project.run_simulation()
        project.set_sim_config(fc.SimConfig(sheet_mass_kg=0.03))
        assert project.formed is None

    def test_circuit_edit_drops_only_flat_cache(self, project):
        project.run_simulation()
        project.run_flatten()
        project.invalidate_flat()
        assert project.flat_layout is None
        assert project.formed is not None

    def test_flatten_requires_simulation(self, project):
        with pytest.raises(fc.errors.FormcastError):
            project.run_flatten()

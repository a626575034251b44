"""CLI pipeline: outputs, exit codes, reproducibility."""
import json

import pytest

import formcast as fc
from formcast import molds
from formcast.cli import main
from formcast.geometry import mesh_to_stl, write_stl
from formcast.project import Project, SheetSpec


@pytest.fixture
def mold_path(tmp_path):
    path = tmp_path / "flat.stl"
    m = molds.fixture("flat")
    path.write_bytes(write_stl(mesh_to_stl(m.vertices, m.triangles, name="flat")))
    return path


class TestSimulateCommand:
    def test_happy_path(self, tmp_path, mold_path):
        out = tmp_path / "formed.stl"
        stretch = tmp_path / "stretch.json"
        code = main(
            [
                "simulate",
                "--mold", str(mold_path),
                "--grid", "9",
                "--out", str(out),
                "--stretch", str(stretch),
            ]
        )
        assert code == 0
        assert len(fc.parse_stl(out.read_bytes())) == 2 * 8 * 8
        payload = json.loads(stretch.read_bytes())
        assert payload["summary"]["max"] == pytest.approx(1.0, abs=1e-6)

    def test_missing_mold_exit_3(self, tmp_path, capsys):
        code = main(["simulate", "--mold", str(tmp_path / "nope.stl"), "--grid", "5"])
        assert code == 3
        assert "nope.stl" in capsys.readouterr().err

    def test_grid_too_small_exit_1(self, mold_path):
        assert main(["simulate", "--mold", str(mold_path), "--grid", "1"]) == 1

    def test_reproducible_output_bytes(self, tmp_path, mold_path):
        outs = []
        for k in range(2):
            out = tmp_path / f"formed{k}.stl"
            main(
                [
                    "simulate",
                    "--mold", str(mold_path),
                    "--grid", "7",
                    "--out", str(out),
                    "--stretch", str(tmp_path / f"s{k}.json"),
                ]
            )
            outs.append(out.read_bytes())
        assert outs[0] == outs[1]


@pytest.fixture
def project_path(tmp_path, mold_path):
    project = Project(sheet_spec=SheetSpec(nx=9, ny=9))
    project.set_mold(mold_path.read_bytes())
    project.run_simulation()
    sheet = project.reference_sheet()
    fc.add_trace(project.circuit, sheet, [20, 24], 0)
    path = tmp_path / "demo.formcast.json"
    project.save(path)
    return path


class TestExportCommand:
    def test_writes_materials_and_manifest(self, tmp_path, project_path):
        out_dir = tmp_path / "out"
        assert main(["export", str(project_path), "--out-dir", str(out_dir)]) == 0
        names = sorted(p.name for p in out_dir.iterdir())
        assert names == [
            "demo_conductive.stl",
            "demo_manifest.json",
            "demo_substrate.stl",
        ]
        manifest = json.loads((out_dir / "demo_manifest.json").read_bytes())
        assert {o["material"] for o in manifest["outputs"]} == {"conductive", "substrate"}

    def test_rule_violations_exit_4(self, tmp_path, project_path, capsys):
        project = Project.load(project_path)
        sheet = project.reference_sheet()
        fc.add_trace(project.circuit, sheet, [24, 60], 0)  # touches the first trace
        project.save(project_path)
        assert main(["export", str(project_path), "--out-dir", str(tmp_path / "o")]) == 4
        violations = json.loads(capsys.readouterr().err)
        assert violations[0]["kind"] == "clearance"

    def test_missing_project_exit_3(self, tmp_path):
        assert main(["export", str(tmp_path / "missing.formcast.json")]) == 3

    def test_project_without_simulation_exit_1(self, tmp_path):
        p = Project()
        path = tmp_path / "bare.formcast.json"
        p.save(path)
        assert main(["export", str(path)]) == 1


class TestFixtureCommand:
    def test_writes_stl(self, tmp_path):
        out = tmp_path / "hemi.stl"
        assert main(["fixture", "hemisphere", "--out", str(out)]) == 0
        doc = fc.parse_stl(out.read_bytes())
        assert len(doc) > 100

    def test_unknown_fixture(self):
        assert main(["fixture", "doughnut"]) == 1

"""Command-line pipeline: simulate, export, serve, and fixture generation.

Exit codes: 0 success, 1 argument/validation errors, 2 simulation did not
converge (partial outputs are still written), 3 I/O errors, 4 design rule
violations on export (listed as JSON on stderr).
"""
from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import molds
from .analysis import compute_stretch
from .circuit import check_design_rules
from .errors import FormcastError
from .geometry import MoldMesh, mesh_to_stl, parse_stl, write_stl
from .project import PROJECT_SUFFIX, Project, canonical_json
from .simulator import SimConfig, simulate
from .solids import generate_print_model

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_NO_CONVERGENCE = 2
EXIT_IO = 3
EXIT_DESIGN_RULES = 4


def _add_config_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--modulus-pa", type=float, default=None, help="Young's modulus at forming temperature")
    p.add_argument("--mass-kg", type=float, default=None, help="total sheet mass")
    p.add_argument("--clamp-height", type=float, default=None, help="clamp start height in mm")
    p.add_argument("--suction-kpa", type=float, default=None, help="effective forming pressure")
    p.add_argument("--contact-tol", type=float, default=None, help="contact tolerance in mm")


def _config_from_args(args) -> SimConfig:
    kwargs = {}
    if args.modulus_pa is not None:
        kwargs["young_modulus_pa"] = args.modulus_pa
    if args.mass_kg is not None:
        kwargs["sheet_mass_kg"] = args.mass_kg
    if args.clamp_height is not None:
        kwargs["clamp_height_mm"] = args.clamp_height
    if args.suction_kpa is not None:
        kwargs["suction_pressure_kpa"] = args.suction_kpa
    if args.contact_tol is not None:
        kwargs["contact_tol_mm"] = args.contact_tol
    return SimConfig(**kwargs)


def cmd_simulate(args) -> int:
    try:
        data = Path(args.mold).read_bytes()
    except OSError as exc:
        print(f"error: cannot read mold {args.mold!r}: {exc}", file=sys.stderr)
        return EXIT_IO
    try:
        mold = MoldMesh.from_stl(parse_stl(data))
        config = _config_from_args(args)
        formed = simulate(mold, config, args.grid, args.grid, args.width, args.height)
    except (FormcastError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE

    doc = mesh_to_stl(formed.sheet.positions, formed.sheet.triangulated(), name="formed")
    try:
        Path(args.out).write_bytes(write_stl(doc))
        stretch = compute_stretch(formed)
        payload = stretch.to_dict()
        payload["stage_log"] = [log.to_dict() for log in formed.stage_log]
        payload["ok"] = formed.ok
        Path(args.stretch).write_bytes(canonical_json(payload))
    except OSError as exc:
        print(f"error: cannot write outputs: {exc}", file=sys.stderr)
        return EXIT_IO

    print(f"formed mesh -> {args.out}")
    print(f"stretch field -> {args.stretch}")
    if not formed.ok:
        print("warning: simulation did not fully converge (see stage_log)", file=sys.stderr)
        return EXIT_NO_CONVERGENCE
    return EXIT_OK


def cmd_export(args) -> int:
    try:
        project = Project.load(args.project)
    except OSError as exc:
        print(f"error: cannot read project {args.project!r}: {exc}", file=sys.stderr)
        return EXIT_IO
    except (FormcastError, ValueError, KeyError) as exc:
        print(f"error: bad project file: {exc}", file=sys.stderr)
        return EXIT_USAGE

    if project.formed is None:
        print("error: project has no formed sheet; run simulate first", file=sys.stderr)
        return EXIT_USAGE
    sheet = project.reference_sheet()
    violations = check_design_rules(project.circuit, sheet)
    if violations:
        json.dump([v.to_dict() for v in violations], sys.stderr, indent=2)
        sys.stderr.write("\n")
        return EXIT_DESIGN_RULES

    layout = project.run_flatten()
    solids = generate_print_model(layout, project.layer_stack)
    out_dir = Path(args.out_dir)
    stem = Path(args.project).name
    if stem.endswith(PROJECT_SUFFIX):
        stem = stem[: -len(PROJECT_SUFFIX)]
    else:
        stem = Path(stem).stem
    manifest = {"project": args.project, "outputs": []}
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
        for material in sorted(solids):
            data = write_stl(solids[material])
            path = out_dir / f"{stem}_{material}.stl"
            path.write_bytes(data)
            manifest["outputs"].append(
                {"material": material, "path": str(path), "bytes": len(data)}
            )
            print(f"{material} -> {path}")
        (out_dir / f"{stem}_manifest.json").write_bytes(canonical_json(manifest))
    except OSError as exc:
        print(f"error: cannot write outputs: {exc}", file=sys.stderr)
        return EXIT_IO
    return EXIT_OK


def cmd_serve(args) -> int:
    from .service import serve

    port = args.port or int(os.environ.get("FORMCAST_PORT", "8471"))
    print(f"formcast service on http://{args.host}:{port}")
    serve(port=port, host=args.host)
    return EXIT_OK


def cmd_fixture(args) -> int:
    try:
        mold = molds.fixture(args.name)
    except KeyError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    doc = mesh_to_stl(mold.vertices, mold.triangles, name=args.name)
    try:
        Path(args.out).write_bytes(write_stl(doc))
    except OSError as exc:
        print(f"error: cannot write {args.out!r}: {exc}", file=sys.stderr)
        return EXIT_IO
    print(f"{args.name} ({mold.triangle_count} triangles) -> {args.out}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="formcast", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="form a sheet over a mold and export the result")
    p.add_argument("--mold", required=True, help="mold STL path")
    p.add_argument("--grid", type=int, default=20, help="vertices per sheet axis")
    p.add_argument("--width", type=float, default=130.0)
    p.add_argument("--height", type=float, default=130.0)
    p.add_argument("--out", default="formed.stl", help="formed mesh STL output")
    p.add_argument("--stretch", default="stretch.json", help="stretch field JSON output")
    _add_config_flags(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("export", help="generate per-material print STLs from a project")
    p.add_argument("project", help=f"project file ({PROJECT_SUFFIX})")
    p.add_argument("--out-dir", default=".", help="output directory")
    p.set_defaults(func=cmd_export)

    p = sub.add_parser("serve", help="run the local design service")
    p.add_argument("--port", type=int, default=None, help="port (default $FORMCAST_PORT or 8471)")
    p.add_argument("--host", default="127.0.0.1")
    p.set_defaults(func=cmd_serve)

    p = sub.add_parser("fixture", help="write a parametric test mold as STL")
    p.add_argument("name", choices=sorted(molds.FIXTURES))
    p.add_argument("--out", default="mold.stl")
    p.set_defaults(func=cmd_fixture)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code not in (0, None) else EXIT_OK
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())

"""Local HTTP/JSON service exposing the design pipeline to the editor UI.

One project session per process. Mutating requests are serialized through a
single lock and return the new revision number; clients send the revision
they last saw and get 409 when it is stale, which is the UI's cue to refresh.
The service is a thin shim: every endpoint body is a direct call into the
library so that replaying a request log against the library reproduces the
same state.
"""
from __future__ import annotations

import threading

import numpy as np
from fastapi import FastAPI, Request, Response
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse
from pydantic import BaseModel

from . import analysis, circuit as circuit_mod
from .errors import FormcastError
from .flatten import flatten_design
from .project import Project, canonical_json
from .solids import generate_print_model
from .geometry import write_stl

import base64


class TraceRequest(BaseModel):
    picks: list[int]
    layer: int = 0
    width_mm: float = circuit_mod.MIN_TRACE_WIDTH_MM
    revision: int | None = None


class PadRequest(BaseModel):
    faces: list[int]
    layer: int = 0
    exposed: bool = False
    revision: int | None = None


class ViaRequest(BaseModel):
    vertex: int
    radius_mm: float = circuit_mod.MIN_VIA_RADIUS_MM
    from_layer: int = 0
    to_layer: int = 1
    revision: int | None = None


class SimulateRequest(BaseModel):
    nx: int | None = None
    ny: int | None = None
    config: dict | None = None
    revision: int | None = None


class Session:
    def __init__(self) -> None:
        self.project = Project()
        self.revision = 0
        self.lock = threading.Lock()


def create_app(session: Session | None = None) -> FastAPI:
    app = FastAPI(title="formcast service")
    state = session or Session()
    app.state.session = state

    @app.exception_handler(RequestValidationError)
    async def invalid_payload(_req: Request, exc: RequestValidationError):
        return JSONResponse(status_code=400, content={"error": "invalid payload", "detail": exc.errors()})

    @app.exception_handler(FormcastError)
    async def domain_error(_req: Request, exc: FormcastError):
        return JSONResponse(status_code=400, content={"error": str(exc)})

    @app.exception_handler(ValueError)
    async def value_error(_req: Request, exc: ValueError):
        return JSONResponse(status_code=400, content={"error": str(exc)})

    def stale(revision: int | None) -> bool:
        return revision is not None and revision != state.revision

    def bump() -> int:
        state.revision += 1
        return state.revision

    def conflict(reason: str) -> JSONResponse:
        return JSONResponse(status_code=409, content={"error": reason, "revision": state.revision})

    # -- mold and simulation ------------------------------------------------

    @app.post("/mold")
    async def post_mold(request: Request):
        data = await request.body()
        with state.lock:
            state.project.set_mold(data)
            rev = bump()
        mold = state.project.mold
        return {"revision": rev, "triangles": mold.triangle_count, "bounds": mold.bounds.tolist()}

    @app.post("/simulate")
    def post_simulate(body: SimulateRequest | None = None):
        body = body or SimulateRequest()
        with state.lock:
            if stale(body.revision):
                return conflict("stale revision")
            if body.nx or body.ny:
                spec = state.project.sheet_spec
                spec.nx = body.nx or spec.nx
                spec.ny = body.ny or spec.ny
                state.project.set_sheet_spec(spec)
            if body.config:
                merged = state.project.sim_config.to_dict()
                merged.update(body.config)
                state.project.set_sim_config(type(state.project.sim_config).from_dict(merged))
            formed = state.project.run_simulation()
            rev = bump()
        return {
            "revision": rev,
            "stage_log": [log.to_dict() for log in formed.stage_log],
            "ok": formed.ok,
        }

    @app.get("/mesh")
    def get_mesh():
        formed = app.state.session.project.formed
        if formed is None:
            return conflict("no formed sheet")
        sheet = formed.sheet
        stretch = analysis.compute_stretch(formed)
        return {
            "revision": state.revision,
            "nx": sheet.nx,
            "ny": sheet.ny,
            "width_mm": sheet.width_mm,
            "height_mm": sheet.height_mm,
            "positions": [float(x) for x in sheet.positions.ravel()],
            "rest_positions": [float(x) for x in sheet.rest_positions.ravel()],
            "vertex_state": [int(x) for x in sheet.vertex_state],
            "quads": [int(x) for x in sheet.quads.ravel()],
            "face_stretch": [float(x) for x in stretch.face_area_ratio],
            "edge_stretch_summary": stretch.summary(),
        }

    # -- circuit editing -----------------------------------------------------

    @app.post("/traces")
    def post_trace(body: TraceRequest):
        with state.lock:
            if stale(body.revision):
                return conflict("stale revision")
            sheet = state.project.reference_sheet()
            trace = circuit_mod.add_trace(
                state.project.circuit, sheet, body.picks, body.layer, body.width_mm
            )
            state.project.invalidate_flat()
            rev = bump()
        return {"revision": rev, "id": trace.id, "path": list(trace.path), "layer": trace.layer}

    @app.post("/pads")
    def post_pad(body: PadRequest):
        with state.lock:
            if stale(body.revision):
                return conflict("stale revision")
            sheet = state.project.reference_sheet()
            pad = circuit_mod.add_pad(
                state.project.circuit, sheet, body.faces, body.layer, body.exposed
            )
            state.project.invalidate_flat()
            rev = bump()
        return {"revision": rev, "id": pad.id, "faces": list(pad.faces), "layer": pad.layer}

    @app.post("/vias")
    def post_via(body: ViaRequest):
        with state.lock:
            if stale(body.revision):
                return conflict("stale revision")
            sheet = state.project.reference_sheet()
            via = circuit_mod.add_via(
                state.project.circuit, sheet, body.vertex, body.radius_mm,
                body.from_layer, body.to_layer,
            )
            state.project.invalidate_flat()
            rev = bump()
        return {"revision": rev, "id": via.id}

    @app.delete("/feature/{feature_id}")
    def delete_feature(feature_id: str):
        with state.lock:
            if not state.project.circuit.remove_feature(feature_id):
                return JSONResponse(status_code=404, content={"error": f"no feature {feature_id}"})
            state.project.invalidate_flat()
            rev = bump()
        return {"revision": rev, "deleted": feature_id}

    @app.post("/check")
    def post_check():
        sheet = state.project.reference_sheet()
        violations = circuit_mod.check_design_rules(state.project.circuit, sheet)
        return {
            "revision": state.revision,
            "violations": [v.to_dict() for v in violations],
            "clean": not violations,
        }

    # -- flatten and export ---------------------------------------------------

    @app.get("/flatten")
    def get_flatten():
        with state.lock:
            if state.project.formed is None:
                return conflict("no formed sheet")
            layout = state.project.flat_layout or state.project.run_flatten()
        return {"revision": state.revision, "layout": layout.to_dict()}

    @app.post("/export")
    def post_export():
        with state.lock:
            if state.project.formed is None:
                return conflict("no formed sheet")
            sheet = state.project.reference_sheet()
            violations = circuit_mod.check_design_rules(state.project.circuit, sheet)
            if violations:
                return JSONResponse(
                    status_code=422,
                    content={
                        "error": "design rule violations",
                        "violations": [v.to_dict() for v in violations],
                    },
                )
            layout = state.project.flat_layout or state.project.run_flatten()
            solids = generate_print_model(layout, state.project.layer_stack)
        files = []
        for material in sorted(solids):
            data = write_stl(solids[material])
            files.append(
                {
                    "material": material,
                    "filename": f"project_{material}.stl",
                    "bytes": len(data),
                    "stl_b64": base64.b64encode(data).decode("ascii"),
                }
            )
        return {"revision": state.revision, "files": files}

    # -- project persistence ---------------------------------------------------

    @app.get("/project")
    def get_project():
        return Response(content=state.project.dumps(), media_type="application/json")

    @app.put("/project")
    async def put_project(request: Request):
        data = await request.body()
        with state.lock:
            state.project = Project.loads(data)
            rev = bump()
        return {"revision": rev}

    return app


def serve(port: int = 8471, host: str = "127.0.0.1") -> None:
    """Run the service until interrupted (one project session)."""
    import uvicorn

    uvicorn.run(create_app(), host=host, port=port, log_level="warning")

"""Local HTTP service for interactive refinement.

One session, one grid, one abstraction. Reads return snapshots; mutations
(refine, undo) are serialized behind a lock and answered 409 while another
is in flight. The undo stack keeps the last 32 states, newest on top; the
top always mirrors the current abstraction.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass, field

import numpy as np
from fastapi import FastAPI, Request
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse
from pydantic import BaseModel
from skimage import measure

from .errors import DegenerateRegion, UnknownPrimitive
from .grid import TsdfGrid
from .metrics import evaluate
from .pipeline import Abstraction, multiscale_refine

UNDO_DEPTH = 32


class RefineRequest(BaseModel):
    id: int
    splits: int = 2


@dataclass
class SessionState:
    grid: TsdfGrid
    abstraction: Abstraction
    undo_stack: list[Abstraction] = field(default_factory=list)
    lock: threading.Lock = field(default_factory=threading.Lock)

    def __post_init__(self):
        if not self.undo_stack:
            self.undo_stack = [self.abstraction]

    def push(self, abstraction: Abstraction) -> None:
        self.abstraction = abstraction
        self.undo_stack.append(abstraction)
        if len(self.undo_stack) > UNDO_DEPTH:
            del self.undo_stack[0]

    def undo(self) -> bool:
        if len(self.undo_stack) <= 1:
            return False
        self.undo_stack.pop()
        self.abstraction = self.undo_stack[-1]
        return True


def _mesh_payload(vertices: np.ndarray, triangles: np.ndarray) -> dict:
    return {
        "vertices": np.asarray(vertices, dtype=float).tolist(),
        "triangles": np.asarray(triangles, dtype=int).tolist(),
    }


def create_app(state: SessionState) -> FastAPI:
    app = FastAPI(title="lightsq")

    @app.exception_handler(RequestValidationError)
    async def malformed_body(request: Request, exc: RequestValidationError):
        return JSONResponse(status_code=400, content={"detail": "malformed body"})

    @app.get("/abstraction")
    def get_abstraction():
        return state.abstraction.to_dict()

    @app.get("/mesh/{pid}")
    def get_mesh(pid: int):
        try:
            prim = state.abstraction.find(pid)
        except UnknownPrimitive:
            return JSONResponse(status_code=404, content={"detail": f"no primitive {pid}"})
        verts, tris = prim.sq.tessellate()
        payload = _mesh_payload(verts, tris)
        payload["id"] = pid
        payload["stage"] = prim.stage
        return payload

    @app.get("/reference-mesh")
    def get_reference_mesh():
        g = state.grid
        verts, faces, _, _ = measure.marching_cubes(
            g.values.astype(np.float64), level=0.0
        )
        verts = g.origin + verts * g.voxel_size
        return _mesh_payload(verts, faces)

    @app.get("/metrics")
    def get_metrics():
        report = evaluate(state.abstraction, state.grid)
        return report.to_dict()

    @app.post("/refine")
    def post_refine(body: RefineRequest):
        if body.splits < 1:
            return JSONResponse(status_code=400, content={"detail": "splits must be >= 1"})
        if not state.lock.acquire(blocking=False):
            return JSONResponse(
                status_code=409, content={"detail": "refinement already in flight"}
            )
        try:
            refined = multiscale_refine(
                state.abstraction, state.grid, body.id, body.splits
            )
            state.push(refined)
        except UnknownPrimitive:
            return JSONResponse(
                status_code=404, content={"detail": f"no primitive {body.id}"}
            )
        except DegenerateRegion as exc:
            return JSONResponse(status_code=400, content={"detail": str(exc)})
        finally:
            state.lock.release()
        return refined.to_dict()

    @app.post("/undo")
    def post_undo():
        if not state.lock.acquire(blocking=False):
            return JSONResponse(
                status_code=409, content={"detail": "refinement already in flight"}
            )
        try:
            if not state.undo():
                return JSONResponse(
                    status_code=409, content={"detail": "nothing to undo"}
                )
        finally:
            state.lock.release()
        return state.abstraction.to_dict()

    return app

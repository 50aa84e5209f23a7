"""HTTP front end over the experiment runner.

POST /run takes the same document as a config file, executes it in
process, and returns summary, manifest, and artifact texts.  POST
/compare diffs two serialized distributions.  Error mapping: physics
preconditions 409, resource caps 413, malformed inputs 422.
"""

from __future__ import annotations

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse
from pydantic import BaseModel

from . import __version__
from .config import RunConfig
from .errors import FormatError, PhysicsError, ResourceCapError
from .experiments import compare_distributions, execute_run

_STATUS = [
    (ResourceCapError, 413),
    (FormatError, 422),
    (PhysicsError, 409),
]


class CompareRequest(BaseModel):
    a: str
    b: str


def create_app() -> FastAPI:
    app = FastAPI(title="ocmsim", version=__version__)

    for exc_type, status in _STATUS:
        def handler(request: Request, exc: Exception, status: int = status) -> JSONResponse:
            return JSONResponse(
                status_code=status,
                content={"error": type(exc).__name__, "message": str(exc)},
            )
        app.add_exception_handler(exc_type, handler)

    @app.get("/health")
    def health() -> dict:
        return {"status": "ok", "version": __version__}

    @app.post("/run")
    def run(cfg: RunConfig) -> dict:
        res = execute_run(cfg)
        return {
            "summary": res.summary,
            "manifest": res.manifest,
            "artifacts": res.artifacts,
        }

    @app.post("/compare")
    def compare(req: CompareRequest) -> dict:
        return compare_distributions(req.a, req.b)

    return app


app = create_app()

from __future__ import annotations

from fastapi import FastAPI, Request
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse
from pydantic import BaseModel

from .config import SidecarConfig
from .service import InvalidRequest, MaskedLMService, PositionNotBlanked


class PriorsRequest(BaseModel):
    tokens: list[int]
    positions: list[int]
    top_k: int | None = None


class EmbedRequest(BaseModel):
    tokens: list[int]


def create_app(cfg: SidecarConfig) -> FastAPI:
    service = MaskedLMService(cfg)
    app = FastAPI(title="mlm-sidecar")
    app.state.service = service

    @app.exception_handler(RequestValidationError)
    async def _validation_error(request: Request, exc: RequestValidationError):
        return JSONResponse(status_code=400, content={"error": str(exc.errors())})

    @app.exception_handler(PositionNotBlanked)
    async def _blanking_error(request: Request, exc: PositionNotBlanked):
        return JSONResponse(status_code=422, content={"error": str(exc)})

    @app.exception_handler(InvalidRequest)
    async def _invalid_request(request: Request, exc: InvalidRequest):
        return JSONResponse(status_code=400, content={"error": str(exc)})

    @app.exception_handler(Exception)
    async def _model_failure(request: Request, exc: Exception):
        return JSONResponse(status_code=500, content={"error": f"{type(exc).__name__}: {exc}"})

    @app.get("/healthz")
    def healthz():
        return {"status": "ok"}

    @app.get("/v1/vocab")
    def vocab():
        return service.vocab_payload()

    @app.post("/v1/priors")
    def priors(body: PriorsRequest):
        return service.fill_positions(body.tokens, body.positions, body.top_k)

    @app.post("/v1/embed")
    def embed(body: EmbedRequest):
        return service.embed(body.tokens)

    return app

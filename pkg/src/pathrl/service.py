"""Stateless HTTP scoring endpoint around :func:`pathrl.rewards.score`.

Routes: ``POST /v1/score``, ``POST /v1/score_batch``, ``GET /healthz``.
Bind address comes from ``PATHRL_HOST`` / ``PATHRL_PORT`` unless given
explicitly.
"""

from __future__ import annotations

import logging
import os
from contextlib import asynccontextmanager
from typing import Literal, Optional

from fastapi import FastAPI, Request
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse
from pydantic import BaseModel, ConfigDict, Field

from . import __version__
from .parsing import parse_prompt_options
from .rewards import MalformedRecord, RewardConfig, score
from .wire import gt_from_wire

log = logging.getLogger(__name__)

DEFAULT_HOST = "127.0.0.1"
DEFAULT_PORT = 8000
HOST_ENV = "PATHRL_HOST"
PORT_ENV = "PATHRL_PORT"
BUILD_ENV = "PATHRL_BUILD"


class ImageDims(BaseModel):
    model_config = ConfigDict(extra="forbid")
    h: int = Field(gt=0)
    w: int = Field(gt=0)


class ScoreRequest(BaseModel):
    model_config = ConfigDict(extra="forbid", populate_by_name=True)

    task: Literal["cls", "det", "seg", "vqa_closed", "vqa_open"]
    response: str
    gt: dict
    lam: Optional[float] = Field(default=None, alias="lambda", ge=0, allow_inf_nan=False)
    image: Optional[ImageDims] = None
    prompt: Optional[str] = None


class ScoreResponse(BaseModel):
    model_config = ConfigDict(populate_by_name=True)

    r_task: float
    r_format: int
    lam: float = Field(alias="lambda")
    total: float
    format_ok: bool
    extracted: Optional[str] = None
    n_boxes: Optional[int] = None


class RequestError(ValueError):
    """A request that parsed as JSON but cannot be scored."""


def handle_score(req: ScoreRequest, default_lambda: float = 1.0) -> ScoreResponse:
    """Score one request exactly as the in-process reward engine would."""
    image = (req.image.h, req.image.w) if req.image else None
    try:
        if req.task == "seg" and image is None:
            raise MalformedRecord("segmentation requests need image {'h', 'w'}")
        gt = gt_from_wire(req.task, req.gt, image)
        cfg = RewardConfig(lam=default_lambda if req.lam is None else req.lam)
        options = parse_prompt_options(req.prompt) if req.prompt else None
        result = score(req.task, req.response, gt, cfg, image=image, options=options or None)
    except MalformedRecord as e:
        raise RequestError(str(e)) from None
    if result.total != result.r_task + result.lam * result.r_format:
        raise AssertionError("composite reward identity violated")
    return ScoreResponse(r_task=result.r_task, r_format=result.r_format, lam=result.lam,
                         total=result.total, format_ok=result.format_ok,
                         extracted=result.extracted, n_boxes=result.n_boxes)


def create_app(default_lambda: float = 1.0, build: Optional[str] = None) -> FastAPI:
    state = {"ready": False}
    build = build if build is not None else os.environ.get(BUILD_ENV, "dev")

    @asynccontextmanager
    async def lifespan(app):
        state["ready"] = True
        yield
        state["ready"] = False

    app = FastAPI(title="pathrl scoring", version=__version__, lifespan=lifespan)
    app.state.status = state

    @app.exception_handler(RequestValidationError)
    async def _validation(request: Request, exc: RequestValidationError):
        detail = [{"loc": list(e["loc"]), "msg": e["msg"]} for e in exc.errors()]
        return JSONResponse(status_code=422, content={"error": "validation_error", "detail": detail})

    @app.exception_handler(RequestError)
    async def _request_error(request: Request, exc: RequestError):
        return JSONResponse(status_code=422, content={"error": "invalid_record", "detail": str(exc)})

    @app.exception_handler(AssertionError)
    async def _internal(request: Request, exc: AssertionError):
        log.error("invariant breach: %s", exc)
        return JSONResponse(status_code=500, content={"error": "internal", "detail": str(exc)})

    @app.post("/v1/score", response_model=ScoreResponse, response_model_by_alias=True)
    def post_score(req: ScoreRequest):
        return handle_score(req, default_lambda)

    @app.post("/v1/score_batch", response_model=list[ScoreResponse], response_model_by_alias=True)
    def post_score_batch(reqs: list[ScoreRequest]):
        return [handle_score(r, default_lambda) for r in reqs]

    @app.get("/healthz")
    def healthz():
        ready = state["ready"]
        body = {"status": "ok" if ready else "not-ready", "version": __version__, "build": build}
        return JSONResponse(status_code=200 if ready else 503, content=body)

    return app


def bind_address(host: Optional[str] = None, port: Optional[int] = None) -> tuple[str, int]:
    host = host or os.environ.get(HOST_ENV, DEFAULT_HOST)
    port = port if port is not None else int(os.environ.get(PORT_ENV, DEFAULT_PORT))
    return host, port


def serve(host: Optional[str] = None, port: Optional[int] = None, default_lambda: float = 1.0):
    import uvicorn

    host, port = bind_address(host, port)
    uvicorn.run(create_app(default_lambda), host=host, port=port, log_level="info")

"""HTTP service wrapping one pipeline.

Endpoints: POST /v1/classify and GET /v1/health. The pipeline is immutable
and shared across requests; the only mutable pieces are the monotonic
request counters and the semaphore bounding concurrent generation calls.
Errors use the same {"error": {"code", "message"}} shape as the backend
wire protocol.
"""

from __future__ import annotations

import threading
import uuid

import numpy as np
from fastapi import FastAPI, Request
from fastapi.concurrency import run_in_threadpool
from fastapi.responses import JSONResponse

from .domain import normalize_embedding
from .errors import BackendError, DataError
from .pipeline import Pipeline


def _error(status: int, code: str, message: str) -> JSONResponse:
    return JSONResponse(
        status_code=status, content={"error": {"code": code, "message": message}}
    )


class _BoundedGenerator:
    """Caps in-flight generate calls without touching the backend itself."""

    def __init__(self, inner, cap: int):
        self._inner = inner
        self._semaphore = threading.Semaphore(cap)

    def generate(self, prompt: str, max_tokens: int, temperature: float) -> str:
        with self._semaphore:
            return self._inner.generate(prompt, max_tokens, temperature)

    def health(self) -> bool:
        return self._inner.health()


class ServiceMetrics:
    def __init__(self):
        self._lock = threading.Lock()
        self.requests_total = 0
        self.escalated_total = 0
        self.degraded_total = 0

    def record(self, escalated: bool, degraded: bool) -> None:
        with self._lock:
            self.requests_total += 1
            if escalated:
                self.escalated_total += 1
            if degraded:
                self.degraded_total += 1


def create_app(pipeline: Pipeline) -> FastAPI:
    bounded = Pipeline(
        pipeline.config,
        pipeline.catalog,
        pipeline.classifier,
        pipeline.dictionary,
        pipeline.embedder,
        _BoundedGenerator(pipeline.generator, pipeline.config.concurrency),
        pipeline.template,
    )
    app = FastAPI(title="intentgate", docs_url=None, redoc_url=None)
    app.state.pipeline = bounded
    app.state.metrics = ServiceMetrics()
    # Readiness is sticky: once the backends have answered a probe the
    # loaded artifacts cannot go away, and later backend trouble surfaces
    # per-request as 502 or a degraded flag.
    app.state.ready = False
    ready_lock = threading.Lock()

    def check_ready() -> bool:
        if app.state.ready:
            return True
        with ready_lock:
            if not app.state.ready:
                app.state.ready = bounded.ready()
        return app.state.ready

    @app.get("/v1/health")
    async def health() -> JSONResponse:
        ready = await run_in_threadpool(check_ready)
        return JSONResponse({"status": "ok", "ready": ready})

    @app.post("/v1/classify")
    async def classify(request: Request) -> JSONResponse:
        try:
            body = await request.json()
        except Exception:
            return _error(400, "bad_request", "body is not valid JSON")
        if not isinstance(body, dict):
            return _error(400, "bad_request", "body must be a JSON object")

        request_id = body.get("request_id", uuid.uuid4().hex)
        if not isinstance(request_id, str):
            return _error(400, "bad_request", "request_id must be a string")

        text = body.get("text")
        raw_embedding = body.get("embedding")
        if text is None and raw_embedding is None:
            return _error(400, "bad_request", "body must contain 'text' or 'embedding'")
        if text is not None and (not isinstance(text, str) or not text.strip()):
            return _error(400, "bad_request", "'text' must be a non-empty string")

        if not await run_in_threadpool(check_ready):
            return _error(503, "not_ready", "pipeline backends are not reachable")

        try:
            if raw_embedding is not None:
                try:
                    vector = np.asarray(raw_embedding, dtype=float)
                except (TypeError, ValueError):
                    return _error(400, "bad_request", "'embedding' must be a numeric vector")
                response = await run_in_threadpool(
                    bounded.classify_embedding,
                    normalize_embedding(vector),
                    text,
                    request_id,
                )
            else:
                response = await run_in_threadpool(bounded.classify_text, text, request_id)
        except DataError as exc:
            return _error(400, "bad_request", str(exc))
        except BackendError as exc:
            return _error(502, exc.code, str(exc))

        app.state.metrics.record(response.escalated, response.degraded)
        payload = response.to_dict()
        payload["request_id"] = request_id
        return JSONResponse(payload)

    return app

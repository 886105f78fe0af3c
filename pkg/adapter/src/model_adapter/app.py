"""The wire-protocol HTTP surface.

POST /v1/embed     {"texts": [...]}                        -> {"dim", "embeddings"}
POST /v1/generate  {"prompt", "max_tokens", "temperature"} -> {"text"}
GET  /v1/health                                            -> {"status": "ok"}

Errors are {"error": {"code", "message"}} with 400 for bad requests and
500 when a model call fails. Model calls are serialized behind one lock;
requests themselves run concurrently and embedding batches larger than
``max_batch`` are split without any visible effect on the response.
"""

from __future__ import annotations

import threading

import numpy as np
from fastapi import FastAPI, Request
from fastapi.concurrency import run_in_threadpool
from fastapi.responses import JSONResponse

from .config import AdapterConfig
from .models import ModelFailure, build_encoder, build_generator


def _error(status: int, code: str, message: str) -> JSONResponse:
    return JSONResponse(
        status_code=status, content={"error": {"code": code, "message": message}}
    )


def create_app(config: AdapterConfig) -> FastAPI:
    encoder = build_encoder(config)
    generator = build_generator(config)
    model_lock = threading.Lock()

    app = FastAPI(title="model-adapter", docs_url=None, redoc_url=None)
    app.state.config = config
    app.state.encoder = encoder
    app.state.generator = generator

    def embed_batched(texts: list[str]) -> np.ndarray:
        chunks = []
        with model_lock:
            for start in range(0, len(texts), config.max_batch):
                chunks.append(app.state.encoder.encode(texts[start : start + config.max_batch]))
        return np.concatenate(chunks)

    @app.get("/v1/health")
    async def health() -> JSONResponse:
        return JSONResponse({"status": "ok"})

    @app.post("/v1/embed")
    async def embed(request: Request) -> JSONResponse:
        try:
            body = await request.json()
        except Exception:
            return _error(400, "bad_request", "body is not valid JSON")
        if not isinstance(body, dict):
            return _error(400, "bad_request", "body must be a JSON object")
        texts = body.get("texts")
        if not isinstance(texts, list) or not texts:
            return _error(400, "bad_request", "'texts' must be a non-empty list")
        if not all(isinstance(t, str) for t in texts):
            return _error(400, "bad_request", "'texts' entries must be strings")
        try:
            matrix = await run_in_threadpool(embed_batched, texts)
        except ModelFailure as exc:
            return _error(500, "model_failure", str(exc))
        return JSONResponse(
            {"dim": app.state.encoder.dim, "embeddings": matrix.tolist()}
        )

    @app.post("/v1/generate")
    async def generate(request: Request) -> JSONResponse:
        try:
            body = await request.json()
        except Exception:
            return _error(400, "bad_request", "body is not valid JSON")
        if not isinstance(body, dict):
            return _error(400, "bad_request", "body must be a JSON object")
        prompt = body.get("prompt")
        if not isinstance(prompt, str) or not prompt:
            return _error(400, "bad_request", "'prompt' must be a non-empty string")
        max_tokens = body.get("max_tokens", 32)
        temperature = body.get("temperature", 0.0)
        if not isinstance(max_tokens, int) or isinstance(max_tokens, bool) or max_tokens < 1:
            return _error(400, "bad_request", "'max_tokens' must be a positive integer")
        if not isinstance(temperature, (int, float)) or isinstance(temperature, bool):
            return _error(400, "bad_request", "'temperature' must be a number")

        def run():
            with model_lock:
                return app.state.generator.generate(prompt, max_tokens, float(temperature))

        try:
            text = await run_in_threadpool(run)
        except ModelFailure as exc:
            return _error(500, "model_failure", str(exc))
        return JSONResponse({"text": text})

    return app

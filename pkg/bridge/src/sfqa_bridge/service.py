"""HTTP surface of the bridge: GET /health and POST /v1/read.

Errors use the envelope {"error": {"code": ..., "message": ...}}: 400 for
schema violations, 503 until the model has loaded (or when loading failed),
500 on inference failure. The model loads on a background thread so the
service answers /health immediately.
"""

from __future__ import annotations

import threading
from contextlib import asynccontextmanager

import jsonschema
from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse

from .model import BridgeConfig, ExtractiveReader
from .protocol import HEALTH_PATH, READ_PATH, READ_REQUEST_SCHEMA


def _error(status: int, code: str, message: str) -> JSONResponse:
    return JSONResponse({"error": {"code": code, "message": message}}, status_code=status)


def _load_reader(config: BridgeConfig) -> ExtractiveReader:
    return ExtractiveReader(config)


def create_app(config: BridgeConfig) -> FastAPI:
    """Build the service; the model starts loading when the app starts."""

    @asynccontextmanager
    async def lifespan(app: FastAPI):
        def load():
            try:
                app.state.reader = _load_reader(config)
            except Exception as exc:
                app.state.load_error = f"{type(exc).__name__}: {exc}"

        threading.Thread(target=load, name="bridge-load", daemon=True).start()
        yield

    app = FastAPI(title="sfqa reader bridge", docs_url=None, redoc_url=None, lifespan=lifespan)
    app.state.config = config
    app.state.reader = None
    app.state.load_error = None
    app.state.lock = threading.Lock()

    @app.get(HEALTH_PATH)
    async def health():
        if app.state.reader is not None:
            status = "ok"
        elif app.state.load_error is not None:
            status = "failed"
        else:
            status = "loading"
        return {"status": status, "model_id": config.model_id}

    @app.post(READ_PATH)
    async def read(request: Request):
        try:
            body = await request.json()
        except Exception:
            return _error(400, "bad_request", "request body is not valid JSON")
        try:
            jsonschema.validate(body, READ_REQUEST_SCHEMA)
        except jsonschema.ValidationError as exc:
            return _error(400, "bad_request", exc.message)
        reader = app.state.reader
        if reader is None:
            if app.state.load_error is not None:
                return _error(503, "loading_failed", app.state.load_error)
            return _error(503, "loading", "model is still loading")
        passages = [(p["passage_id"], p["text"]) for p in body["passages"]]
        try:
            # One model instance; micro-batching happens inside read().
            with app.state.lock:
                candidates = reader.read(body["question"], passages, body["max_answers"])
        except Exception as exc:
            return _error(500, "inference_failed", f"{type(exc).__name__}: {exc}")
        return {"globally_normalized": reader.globally_normalized, "candidates": candidates}

    return app

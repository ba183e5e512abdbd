"""HTTP ranking service: BM25 retrieval over registered snapshot indexes.

Errors always use the envelope {"error": {"code": ..., "message": ...}} with
status 400 (bad request), 404 (unknown index), or 500 (internal).
"""

from __future__ import annotations

from typing import Mapping

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse

from .ranker import InvertedIndex, query


def _error(status: int, code: str, message: str) -> JSONResponse:
    return JSONResponse({"error": {"code": code, "message": message}}, status_code=status)


def create_app(indexes: Mapping[str, InvertedIndex]) -> FastAPI:
    """Build the service over a registry of snapshot_id -> index."""
    app = FastAPI(title="sfqa ranking service", docs_url=None, redoc_url=None)
    app.state.indexes = dict(indexes)

    @app.get("/health")
    async def health():
        return {"status": "ok", "indexes": sorted(app.state.indexes)}

    @app.post("/v1/rank")
    async def rank(request: Request):
        try:
            body = await request.json()
        except Exception:
            return _error(400, "bad_request", "request body is not valid JSON")
        if not isinstance(body, dict):
            return _error(400, "bad_request", "request body must be a JSON object")
        index_name = body.get("index")
        if not isinstance(index_name, str) or not index_name:
            return _error(400, "bad_request", "index must be a nonempty string")
        question = body.get("query")
        if not isinstance(question, str) or not question:
            return _error(400, "bad_request", "query must be a nonempty string")
        top_k = body.get("top_k")
        if not isinstance(top_k, int) or isinstance(top_k, bool) or top_k < 1:
            return _error(400, "bad_request", "top_k must be an integer >= 1")
        index = app.state.indexes.get(index_name)
        if index is None:
            return _error(404, "unknown_index", f"no index named {index_name!r}")
        ranked = query(index, question, top_k)
        return {
            "results": [
                {"passage_id": entry.passage_id, "score": entry.score, "answer": entry.text}
                for entry in ranked.entries
            ]
        }

    @app.exception_handler(Exception)
    async def internal_error(request: Request, exc: Exception):
        return _error(500, "internal", f"{type(exc).__name__}: {exc}")

    return app

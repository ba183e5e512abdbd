"""Shared fixtures: tiny snapshot builders and an in-process reader stub."""

from __future__ import annotations

import json
import threading
from contextlib import contextmanager
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

from sfqa import Document, SplitStrategy, build_snapshot

# --- corpus helpers ---------------------------------------------------------


def snapshot_from_texts(texts, lang="en", snapshot_id="snap", version_tag="v1"):
    """One passage per text: terminator-free texts under the sentence split."""
    docs = [Document(f"d{i:04d}", "", text, lang) for i, text in enumerate(texts)]
    return build_snapshot(docs, SplitStrategy.sentence(), snapshot_id, version_tag)


# --- reader protocol stub ----------------------------------------------------


class _StubHandler(BaseHTTPRequestHandler):
    def do_POST(self):
        length = int(self.headers.get("Content-Length", 0))
        raw = self.rfile.read(length) if length else b""
        if self.path != "/v1/read":
            self._send(404, {"error": {"code": "not_found", "message": self.path}})
            return
        try:
            payload = json.loads(raw)
        except ValueError:
            self._send(400, {"error": {"code": "bad_request", "message": "not JSON"}})
            return
        self.server.requests.append(payload)
        status, reply = self.server.behavior(payload)
        self._send(status, reply)

    def _send(self, status, payload):
        body = payload if isinstance(payload, bytes) else json.dumps(payload).encode("utf-8")
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)

    def log_message(self, *args):
        pass


@contextmanager
def reader_stub(behavior):
    """Serve the read protocol from `behavior(payload) -> (status, reply)`.

    Yields (server, endpoint). The server records every request payload on
    server.requests.
    """
    server = ThreadingHTTPServer(("127.0.0.1", 0), _StubHandler)
    server.behavior = behavior
    server.requests = []
    thread = threading.Thread(
        target=lambda: server.serve_forever(poll_interval=0.02), daemon=True
    )
    thread.start()
    try:
        yield server, f"http://127.0.0.1:{server.server_port}"
    finally:
        server.shutdown()
        thread.join(timeout=5)
        server.server_close()


def first_token_behavior(payload):
    """Well-formed reader: first one and two whitespace tokens of each passage.

    Logits are 1.0 and 0.5; probabilities are their two-way softmax, so the
    reply satisfies every protocol invariant.
    """
    candidates = []
    for passage in payload["passages"]:
        text = passage["text"]
        words = text.split()
        if not words:
            continue
        spans = []
        first_end = text.index(words[0]) + len(words[0])
        spans.append((text.index(words[0]), first_end))
        if len(words) > 1:
            second_start = text.index(words[1], first_end)
            spans.append((spans[0][0], second_start + len(words[1])))
        logits = [1.0, 0.5][: len(spans)]
        if len(logits) == 1:
            probs = [1.0]
        else:
            # softmax(1.0, 0.5), frozen
            probs = [0.6224593312018545, 0.3775406687981454]
        for (start, end), logit, prob in zip(spans, logits, probs):
            candidates.append(
                {
                    "passage_id": passage["passage_id"],
                    "text": text[start:end],
                    "start": start,
                    "end": end,
                    "logit": logit,
                    "prob": prob,
                }
            )
    return 200, {"globally_normalized": False, "candidates": candidates}

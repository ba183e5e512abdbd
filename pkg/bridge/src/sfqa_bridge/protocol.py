"""Reader wire protocol: the request and reply shapes for POST /v1/read.

This is the bridge's own statement of the contract. The pipeline package
publishes the same shapes from its side of the wire; the test suite checks
the two copies never drift.
"""

from __future__ import annotations

READ_PATH = "/v1/read"
HEALTH_PATH = "/health"

READ_REQUEST_SCHEMA = {
    "type": "object",
    "required": ["question_id", "question", "passages", "max_answers"],
    "additionalProperties": False,
    "properties": {
        "question_id": {"type": "string"},
        "question": {"type": "string"},
        "max_answers": {"type": "integer", "minimum": 1},
        "passages": {
            "type": "array",
            "minItems": 1,
            "items": {
                "type": "object",
                "required": ["passage_id", "text"],
                "additionalProperties": False,
                "properties": {
                    "passage_id": {"type": "string", "minLength": 1},
                    "text": {"type": "string"},
                },
            },
        },
    },
}

READ_REPLY_SCHEMA = {
    "type": "object",
    "required": ["globally_normalized", "candidates"],
    "additionalProperties": False,
    "properties": {
        "globally_normalized": {"type": "boolean"},
        "candidates": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["passage_id", "text", "start", "end", "logit", "prob"],
                "additionalProperties": False,
                "properties": {
                    "passage_id": {"type": "string", "minLength": 1},
                    "text": {"type": "string", "minLength": 1},
                    "start": {"type": "integer", "minimum": 0},
                    "end": {"type": "integer", "minimum": 1},
                    "logit": {"type": "number"},
                    "prob": {"type": "number", "minimum": 0, "maximum": 1},
                },
            },
        },
    },
}

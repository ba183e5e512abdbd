"""Reader hub: span extraction over interchangeable backends.

Two backends share one call shape: a builtin lexical reader that needs no
model weights, and a remote client that speaks the HTTP read protocol. Both
return per-passage span candidates carrying a raw logit and a probability.
"""

from __future__ import annotations

import enum
import math
import threading
from dataclasses import dataclass
from typing import Sequence

import requests

from .analysis import analysis_token_spans, index_tokens, softmax
from .errors import ReaderProtocolError, ReaderUnavailable

READ_PATH = "/v1/read"
HEALTH_PATH = "/health"

# Tokens of surrounding context counted when scoring a window.
CONTEXT_RADIUS = 10
# Longest candidate span, in analysis tokens.
MAX_WINDOW_TOKENS = 8

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


class ReaderKind(str, enum.Enum):
    BUILTIN_LEXICAL = "builtin-lexical"
    REMOTE = "remote"


@dataclass(frozen=True)
class ReaderSpec:
    kind: ReaderKind
    model_id: str = ""
    endpoint: str | None = None
    max_answers_per_passage: int = 5

    def __post_init__(self):
        object.__setattr__(self, "kind", ReaderKind(self.kind))
        if self.kind is ReaderKind.REMOTE and not self.endpoint:
            raise ValueError("remote readers need an endpoint")
        if self.max_answers_per_passage < 1:
            raise ValueError("max_answers_per_passage must be >= 1")

    @property
    def reader_id(self) -> str:
        return f"{self.kind.value}:{self.model_id}" if self.model_id else self.kind.value


@dataclass(frozen=True)
class SpanCandidate:
    """One extracted answer span. char_span indexes the passage text as sent."""

    question_id: str
    passage_id: str
    answer_text: str
    char_span: tuple[int, int]
    logit: float
    probability: float

    def __post_init__(self):
        start, end = self.char_span
        if not 0 <= start < end:
            raise ValueError(f"bad char span {self.char_span}")
        if not self.answer_text:
            raise ValueError("answer_text must be nonempty")
        if not 0.0 <= self.probability <= 1.0:
            raise ValueError(f"probability {self.probability} outside [0, 1]")


def builtin_lexical_score(
    question: str, passage: str, window: tuple[int, int], lang: str = "en"
) -> float:
    """Fraction of question terms found near a token window of the passage.

    window is a (start, end) pair of analysis-token indexes; the context is
    the window widened by CONTEXT_RADIUS tokens on each side.
    """
    token_spans = analysis_token_spans(passage, lang)
    start, end = window
    if not 0 <= start < end <= len(token_spans):
        raise ValueError(f"window {window} outside passage of {len(token_spans)} tokens")
    question_terms = set(index_tokens(question, lang))
    if not question_terms:
        return 0.0
    tokens = [token for token, _, _ in token_spans]
    context = set(tokens[max(0, start - CONTEXT_RADIUS) : end + CONTEXT_RADIUS])
    return len(question_terms & context) / len(question_terms)


def _passage_candidates(
    question_terms: set[str],
    question_id: str,
    passage_id: str,
    text: str,
    lang: str,
    max_answers: int,
) -> list[SpanCandidate]:
    token_spans = analysis_token_spans(text, lang)
    count = len(token_spans)
    if count == 0 or not question_terms:
        return []
    tokens = [token for token, _, _ in token_spans]
    denominator = len(question_terms)
    windows: list[tuple[int, int]] = []
    scores: list[float] = []
    for start in range(count):
        for length in range(1, MAX_WINDOW_TOKENS + 1):
            end = start + length
            if end > count:
                break
            context = set(tokens[max(0, start - CONTEXT_RADIUS) : end + CONTEXT_RADIUS])
            windows.append((start, end))
            scores.append(len(question_terms & context) / denominator)
    if max(scores) <= 0.0:
        # No question term anywhere near this passage: contribute nothing.
        return []
    probabilities = softmax(scores)
    order = sorted(
        range(len(windows)),
        key=lambda i: (-scores[i], windows[i][0], windows[i][1] - windows[i][0]),
    )
    candidates = []
    for i in order[:max_answers]:
        start, end = windows[i]
        char_start = token_spans[start][1]
        char_end = token_spans[end - 1][2]
        candidates.append(
            SpanCandidate(
                question_id=question_id,
                passage_id=passage_id,
                answer_text=text[char_start:char_end],
                char_span=(char_start, char_end),
                logit=scores[i],
                probability=probabilities[i],
            )
        )
    return candidates


class BuiltinLexicalReader:
    """Model-free reader: scores every token window of up to 8 tokens by
    question-term overlap and softmaxes over the windows of each passage."""

    def __init__(self, spec: ReaderSpec):
        if spec.kind is not ReaderKind.BUILTIN_LEXICAL:
            raise ValueError(f"spec kind {spec.kind} is not builtin-lexical")
        self.spec = spec

    def read(
        self,
        question: str,
        passages: Sequence[tuple[str, str]],
        question_id: str = "",
        lang: str = "en",
    ) -> list[SpanCandidate]:
        question_terms = set(index_tokens(question, lang))
        candidates: list[SpanCandidate] = []
        for passage_id, text in passages:
            candidates.extend(
                _passage_candidates(
                    question_terms,
                    question_id,
                    passage_id,
                    text,
                    lang,
                    self.spec.max_answers_per_passage,
                )
            )
        return candidates


class RemoteReader:
    """Client for the HTTP read protocol.

    Replies are validated structurally (spans in range, text matching the
    span, probabilities coherent with logits) before anything reaches
    fusion; violations raise ReaderProtocolError.
    """

    def __init__(self, spec: ReaderSpec, timeout: float = 30.0, max_in_flight: int = 4):
        if spec.kind is not ReaderKind.REMOTE:
            raise ValueError(f"spec kind {spec.kind} is not remote")
        self.spec = spec
        self._url = spec.endpoint.rstrip("/") + READ_PATH
        self._timeout = timeout
        self._gate = threading.BoundedSemaphore(max_in_flight)

    def read(
        self,
        question: str,
        passages: Sequence[tuple[str, str]],
        question_id: str = "",
        lang: str = "en",
    ) -> list[SpanCandidate]:
        payload = {
            "question_id": question_id,
            "question": question,
            "passages": [
                {"passage_id": passage_id, "text": text}
                for passage_id, text in passages
            ],
            "max_answers": self.spec.max_answers_per_passage,
        }
        with self._gate:
            try:
                response = requests.post(self._url, json=payload, timeout=self._timeout)
            except requests.RequestException as exc:
                raise ReaderUnavailable(f"reader endpoint {self._url}: {exc}") from exc
        if response.status_code >= 500:
            raise ReaderUnavailable(
                f"reader endpoint {self._url} answered {response.status_code}"
            )
        if response.status_code != 200:
            raise ReaderProtocolError(
                f"reader endpoint {self._url} answered {response.status_code}"
            )
        try:
            reply = response.json()
        except ValueError as exc:
            raise ReaderProtocolError(f"reply is not JSON: {exc}") from exc
        return _parse_reply(
            reply, dict(passages), self.spec.max_answers_per_passage, question_id
        )


def _parse_reply(
    reply: object,
    passage_texts: dict[str, str],
    max_answers: int,
    question_id: str,
) -> list[SpanCandidate]:
    if not isinstance(reply, dict):
        raise ReaderProtocolError("reply must be a JSON object")
    if not isinstance(reply.get("globally_normalized"), bool):
        raise ReaderProtocolError("reply is missing boolean globally_normalized")
    raw = reply.get("candidates")
    if not isinstance(raw, list):
        raise ReaderProtocolError("reply is missing the candidates array")
    candidates: list[SpanCandidate] = []
    per_passage: dict[str, list[tuple[float, float]]] = {}
    for i, item in enumerate(raw):
        where = f"candidate {i}"
        if not isinstance(item, dict):
            raise ReaderProtocolError(f"{where} must be an object")
        passage_id = item.get("passage_id")
        if passage_id not in passage_texts:
            raise ReaderProtocolError(f"{where} names unknown passage {passage_id!r}")
        text = passage_texts[passage_id]
        start, end = item.get("start"), item.get("end")
        for name, value in (("start", start), ("end", end)):
            if not isinstance(value, int) or isinstance(value, bool):
                raise ReaderProtocolError(f"{where}: {name} must be an integer")
        if not 0 <= start < end <= len(text):
            raise ReaderProtocolError(
                f"{where}: span [{start}, {end}) outside passage of {len(text)} chars"
            )
        answer = item.get("text")
        if answer != text[start:end]:
            raise ReaderProtocolError(f"{where}: text does not match its span")
        logit = item.get("logit")
        prob = item.get("prob")
        for name, value in (("logit", logit), ("prob", prob)):
            if not isinstance(value, (int, float)) or isinstance(value, bool):
                raise ReaderProtocolError(f"{where}: {name} must be a number")
            if not math.isfinite(value):
                raise ReaderProtocolError(f"{where}: {name} must be finite")
        if not 0.0 <= prob <= 1.0:
            raise ReaderProtocolError(f"{where}: prob {prob} outside [0, 1]")
        candidates.append(
            SpanCandidate(
                question_id=question_id,
                passage_id=passage_id,
                answer_text=answer,
                char_span=(start, end),
                logit=float(logit),
                probability=float(prob),
            )
        )
        per_passage.setdefault(passage_id, []).append((float(logit), float(prob)))
    for passage_id, pairs in per_passage.items():
        if len(pairs) > max_answers:
            raise ReaderProtocolError(
                f"{len(pairs)} candidates for passage {passage_id!r}, "
                f"limit is {max_answers}"
            )
        for a in range(len(pairs)):
            for b in range(a + 1, len(pairs)):
                # Opposite orderings are protocol violations; ties are fine.
                if (pairs[a][0] - pairs[b][0]) * (pairs[a][1] - pairs[b][1]) < 0:
                    raise ReaderProtocolError(
                        f"passage {passage_id!r}: probability order contradicts "
                        f"logit order"
                    )
    return candidates


def build_reader(spec: ReaderSpec):
    """Backend for a spec; remote readers keep one shared request gate."""
    if spec.kind is ReaderKind.BUILTIN_LEXICAL:
        return BuiltinLexicalReader(spec)
    return RemoteReader(spec)


def read(
    spec: ReaderSpec,
    question: str,
    passages: Sequence[tuple[str, str]],
    question_id: str = "",
    lang: str = "en",
) -> list[SpanCandidate]:
    """One-shot read; builds a fresh backend per call."""
    return build_reader(spec).read(question, passages, question_id, lang)

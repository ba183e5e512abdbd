"""Language-aware tokenization and answer normalization.

English and Chinese are handled with deliberately simple rules so that every
downstream score (retrieval, reading, metrics) is reproducible without any
model-specific tokenizer. English analysis works on lowercased [a-z0-9]+
runs; Chinese analysis works on individual characters.
"""

from __future__ import annotations

import math
import re
import string
import unicodedata

LANGS = ("en", "zh")

_EN_WORD = re.compile(r"[A-Za-z0-9]+")
_EN_NONSPACE = re.compile(r"\S+")
_EN_ARTICLES = frozenset({"a", "an", "the"})
_EN_PUNCT = frozenset(string.punctuation)
_WS = re.compile(r"\s+")


def _check_lang(lang: str) -> None:
    if lang not in LANGS:
        raise ValueError(f"unsupported language {lang!r}; expected one of {LANGS}")


def is_punct(ch: str) -> bool:
    """True for any Unicode punctuation character (categories P*)."""
    return unicodedata.category(ch).startswith("P")


def word_token_spans(text: str) -> list[tuple[str, int, int]]:
    """Lowercased alphanumeric word runs with their character offsets."""
    return [(m.group().lower(), m.start(), m.end()) for m in _EN_WORD.finditer(text)]


def char_token_spans(text: str) -> list[tuple[str, int, int]]:
    """Single non-space, non-punctuation characters with offsets (Chinese)."""
    out = []
    for i, ch in enumerate(text):
        if ch.isspace() or is_punct(ch):
            continue
        out.append((ch.lower(), i, i + 1))
    return out


def analysis_token_spans(text: str, lang: str = "en") -> list[tuple[str, int, int]]:
    """Search/reader tokens with offsets: words for en, characters for zh."""
    _check_lang(lang)
    return word_token_spans(text) if lang == "en" else char_token_spans(text)


def index_tokens(text: str, lang: str = "en") -> list[str]:
    """Token stream fed to the inverted index and to query analysis."""
    return [tok for tok, _, _ in analysis_token_spans(text, lang)]


def sizing_token_spans(text: str, lang: str = "en") -> list[tuple[int, int]]:
    """Token offsets used for passage sizing.

    English counts whitespace-delimited tokens (punctuation stays attached);
    Chinese counts every non-space character.
    """
    _check_lang(lang)
    if lang == "en":
        return [(m.start(), m.end()) for m in _EN_NONSPACE.finditer(text)]
    return [(i, i + 1) for i, ch in enumerate(text) if not ch.isspace()]


def normalize_answer(text: str, lang: str = "en") -> str:
    """Canonical answer form used for exact match, F1, and containment.

    en: lowercase, drop ASCII punctuation, drop articles, collapse whitespace.
    zh: drop Unicode punctuation and all whitespace; no lowercasing, no
    article removal.
    """
    _check_lang(lang)
    if lang == "en":
        lowered = text.lower()
        no_punct = "".join(ch for ch in lowered if ch not in _EN_PUNCT)
        no_articles = " ".join(
            tok for tok in no_punct.split() if tok not in _EN_ARTICLES
        )
        return _WS.sub(" ", no_articles).strip()
    return "".join(ch for ch in text if not ch.isspace() and not is_punct(ch))


def answer_tokens(text: str, lang: str = "en") -> list[str]:
    """Token multiset basis for F1: words for en, characters for zh."""
    normalized = normalize_answer(text, lang)
    if lang == "en":
        return normalized.split()
    return list(normalized)


def softmax(scores: list[float]) -> list[float]:
    """Numerically stable softmax; defined for nonempty inputs."""
    if not scores:
        raise ValueError("softmax requires at least one score")
    peak = max(scores)
    exps = [math.exp(s - peak) for s in scores]
    total = math.fsum(exps)
    return [e / total for e in exps]

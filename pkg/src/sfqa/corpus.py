"""Corpus ingestion: document splitting and immutable passage snapshots.

A snapshot freezes one split of one corpus version behind a checksum so that
retrieval results can be tied back to the exact passage set that produced
them.
"""

from __future__ import annotations

import enum
import hashlib
import json
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Iterator

from .analysis import LANGS, sizing_token_spans
from .errors import DuplicateDocId, EmptyCorpus, InvalidStrategy, SnapshotIntegrityError

_EN_TERMINATORS = frozenset(".!?")
_ZH_TERMINATORS = frozenset("。！？")
# A paragraph break is one or more blank (or whitespace-only) lines.
_PARA_SEP = re.compile(r"\r?\n(?:[ \t]*\r?\n)+")


class SplitKind(str, enum.Enum):
    SENTENCE = "sentence"
    PARAGRAPH = "paragraph"
    CHUNK = "chunk"
    CONTEXT = "context"


@dataclass(frozen=True)
class SplitStrategy:
    """How a document is cut into passages.

    chunk_size/stride apply to CHUNK, max_tokens to CONTEXT; the other kinds
    take no knobs. Token counts come from sizing tokens (whitespace tokens
    for en, characters for zh).
    """

    kind: SplitKind
    chunk_size: int | None = None
    stride: int | None = None
    max_tokens: int | None = None

    def __post_init__(self):
        kind = SplitKind(self.kind)
        object.__setattr__(self, "kind", kind)
        if kind is SplitKind.CHUNK:
            if not isinstance(self.chunk_size, int) or self.chunk_size < 1:
                raise InvalidStrategy("chunk requires chunk_size >= 1")
            if not isinstance(self.stride, int) or not 0 < self.stride <= self.chunk_size:
                raise InvalidStrategy("chunk requires 0 < stride <= chunk_size")
            if self.max_tokens is not None:
                raise InvalidStrategy("max_tokens is only valid for context")
        elif kind is SplitKind.CONTEXT:
            if not isinstance(self.max_tokens, int) or self.max_tokens < 1:
                raise InvalidStrategy("context requires max_tokens >= 1")
            if self.chunk_size is not None or self.stride is not None:
                raise InvalidStrategy("chunk_size/stride are only valid for chunk")
        else:
            if (self.chunk_size, self.stride, self.max_tokens) != (None, None, None):
                raise InvalidStrategy(f"{kind.value} takes no parameters")

    @classmethod
    def sentence(cls) -> "SplitStrategy":
        return cls(SplitKind.SENTENCE)

    @classmethod
    def paragraph(cls) -> "SplitStrategy":
        return cls(SplitKind.PARAGRAPH)

    @classmethod
    def chunk(cls, chunk_size: int, stride: int) -> "SplitStrategy":
        return cls(SplitKind.CHUNK, chunk_size=chunk_size, stride=stride)

    @classmethod
    def context(cls, max_tokens: int) -> "SplitStrategy":
        return cls(SplitKind.CONTEXT, max_tokens=max_tokens)

    def to_dict(self) -> dict:
        out: dict = {"kind": self.kind.value}
        for field in ("chunk_size", "stride", "max_tokens"):
            value = getattr(self, field)
            if value is not None:
                out[field] = value
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "SplitStrategy":
        known = {"kind", "chunk_size", "stride", "max_tokens"}
        unknown = set(data) - known
        if unknown:
            raise InvalidStrategy(f"unknown strategy fields: {sorted(unknown)}")
        if "kind" not in data:
            raise InvalidStrategy("strategy needs a kind")
        try:
            kind = SplitKind(data["kind"])
        except ValueError:
            raise InvalidStrategy(f"unknown split kind {data['kind']!r}") from None
        return cls(
            kind,
            chunk_size=data.get("chunk_size"),
            stride=data.get("stride"),
            max_tokens=data.get("max_tokens"),
        )


@dataclass(frozen=True)
class Document:
    doc_id: str
    title: str
    text: str
    lang: str = "en"

    def __post_init__(self):
        if not self.doc_id:
            raise ValueError("doc_id must be nonempty")
        if not self.text:
            raise ValueError(f"document {self.doc_id!r} has empty text")
        if self.lang not in LANGS:
            raise ValueError(f"unsupported language {self.lang!r}")


@dataclass(frozen=True)
class Passage:
    """One retrievable unit. char_span indexes into the source document."""

    passage_id: str
    doc_id: str
    text: str
    char_span: tuple[int, int]
    ordinal: int


def segment_sentences(text: str, lang: str = "en") -> list[tuple[str, tuple[int, int]]]:
    """Split text into sentences with their character spans.

    English sentences end at . ! ? followed by whitespace or end of text;
    Chinese sentences end immediately after 。！？. Text without a trailing
    terminator still yields a final sentence.
    """
    if lang == "zh":
        terminators, need_break = _ZH_TERMINATORS, False
    else:
        terminators, need_break = _EN_TERMINATORS, True
    sentences = []
    n = len(text)
    i = 0
    while i < n:
        while i < n and text[i].isspace():
            i += 1
        if i >= n:
            break
        start = i
        end = None
        j = i
        while j < n:
            if text[j] in terminators and (
                not need_break or j + 1 >= n or text[j + 1].isspace()
            ):
                end = j + 1
                break
            j += 1
        if end is None:
            end = n
            while end > start and text[end - 1].isspace():
                end -= 1
        sentences.append((text[start:end], (start, end)))
        i = end
    return sentences


def _paragraph_spans(text: str) -> list[tuple[int, int]]:
    spans = []
    pos = 0
    for sep in _PARA_SEP.finditer(text):
        spans.append((pos, sep.start()))
        pos = sep.end()
    spans.append((pos, len(text)))
    trimmed = []
    for start, end in spans:
        while start < end and text[start].isspace():
            start += 1
        while end > start and text[end - 1].isspace():
            end -= 1
        if end > start:
            trimmed.append((start, end))
    return trimmed


def _chunk_spans(
    token_spans: list[tuple[int, int]], chunk_size: int, stride: int
) -> list[tuple[int, int]]:
    """Sliding token windows; generation stops once a window reaches the end."""
    n = len(token_spans)
    if n == 0:
        return []
    windows = []
    start = 0
    while True:
        end = min(start + chunk_size, n)
        windows.append((token_spans[start][0], token_spans[end - 1][1]))
        if end >= n:
            return windows
        start += stride


def _context_spans(text: str, lang: str, max_tokens: int) -> list[tuple[int, int]]:
    """Greedy packing of whole sentences up to max_tokens per passage.

    A single sentence longer than max_tokens becomes its own passage.
    """
    groups = []
    current: list[tuple[int, int]] = []
    total = 0
    for sentence, span in segment_sentences(text, lang):
        count = len(sizing_token_spans(sentence, lang))
        if count == 0:
            continue
        if current and total + count > max_tokens:
            groups.append((current[0][0], current[-1][1]))
            current, total = [], 0
        current.append(span)
        total += count
        if total > max_tokens:
            groups.append((current[0][0], current[-1][1]))
            current, total = [], 0
    if current:
        groups.append((current[0][0], current[-1][1]))
    return groups


def split_document(doc: Document, strategy: SplitStrategy) -> list[Passage]:
    """Cut one document into passages according to the strategy.

    Passage ordering follows document order and every passage carries its
    character span into doc.text, so splitting is lossless and deterministic.
    """
    if strategy.kind is SplitKind.SENTENCE:
        spans = [span for _, span in segment_sentences(doc.text, doc.lang)]
    elif strategy.kind is SplitKind.PARAGRAPH:
        spans = _paragraph_spans(doc.text)
    elif strategy.kind is SplitKind.CHUNK:
        token_spans = sizing_token_spans(doc.text, doc.lang)
        spans = _chunk_spans(token_spans, strategy.chunk_size, strategy.stride)
    else:
        spans = _context_spans(doc.text, doc.lang, strategy.max_tokens)
    passages = []
    for ordinal, (start, end) in enumerate(spans):
        passages.append(
            Passage(
                passage_id=f"{doc.doc_id}#{ordinal}",
                doc_id=doc.doc_id,
                text=doc.text[start:end],
                char_span=(start, end),
                ordinal=ordinal,
            )
        )
    return passages


@dataclass(frozen=True)
class CorpusSnapshot:
    """An immutable, checksummed passage set for one corpus version."""

    snapshot_id: str
    lang: str
    version_tag: str
    strategy: SplitStrategy
    passages: tuple[Passage, ...]
    checksum: str

    @property
    def passage_count(self) -> int:
        return len(self.passages)


def _checksum(passages: Iterable[Passage]) -> str:
    digest = hashlib.sha256()
    for passage in passages:
        digest.update(passage.passage_id.encode("utf-8"))
        digest.update(b"\x00")
        digest.update(passage.text.encode("utf-8"))
        digest.update(b"\x1e")
    return digest.hexdigest()


def build_snapshot(
    docs: Iterable[Document],
    strategy: SplitStrategy,
    snapshot_id: str,
    version_tag: str,
) -> CorpusSnapshot:
    """Split a document stream into a snapshot.

    The stream is consumed once; document order fixes passage order and the
    checksum. Duplicate doc ids and empty results are rejected.
    """
    if not snapshot_id:
        raise ValueError("snapshot_id must be nonempty")
    seen: set[str] = set()
    lang: str | None = None
    passages: list[Passage] = []
    for doc in docs:
        if doc.doc_id in seen:
            raise DuplicateDocId(f"doc id {doc.doc_id!r} appears twice")
        seen.add(doc.doc_id)
        if lang is None:
            lang = doc.lang
        elif doc.lang != lang:
            raise ValueError(
                f"mixed languages in corpus: {lang!r} and {doc.lang!r} "
                f"(doc {doc.doc_id!r})"
            )
        passages.extend(split_document(doc, strategy))
    if not passages:
        raise EmptyCorpus(f"snapshot {snapshot_id!r} would contain zero passages")
    return CorpusSnapshot(
        snapshot_id=snapshot_id,
        lang=lang or "en",
        version_tag=version_tag,
        strategy=strategy,
        passages=tuple(passages),
        checksum=_checksum(passages),
    )


def save_snapshot(snapshot: CorpusSnapshot, directory: str | Path) -> None:
    """Persist a snapshot as manifest.json + passages.jsonl."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    manifest = {
        "format": "sfqa-snapshot-v1",
        "snapshot_id": snapshot.snapshot_id,
        "lang": snapshot.lang,
        "version_tag": snapshot.version_tag,
        "strategy": snapshot.strategy.to_dict(),
        "checksum": snapshot.checksum,
        "passage_count": snapshot.passage_count,
    }
    (directory / "manifest.json").write_text(
        json.dumps(manifest, ensure_ascii=False, sort_keys=True, indent=2) + "\n",
        encoding="utf-8",
    )
    with (directory / "passages.jsonl").open("w", encoding="utf-8") as handle:
        for passage in snapshot.passages:
            record = {
                "passage_id": passage.passage_id,
                "doc_id": passage.doc_id,
                "text": passage.text,
                "start": passage.char_span[0],
                "end": passage.char_span[1],
                "ordinal": passage.ordinal,
            }
            handle.write(json.dumps(record, ensure_ascii=False, sort_keys=True) + "\n")


def load_snapshot(directory: str | Path) -> CorpusSnapshot:
    """Load a persisted snapshot, verifying its checksum."""
    directory = Path(directory)
    manifest = json.loads((directory / "manifest.json").read_text(encoding="utf-8"))
    passages = []
    with (directory / "passages.jsonl").open(encoding="utf-8") as handle:
        for line in handle:
            if not line.strip():
                continue
            record = json.loads(line)
            passages.append(
                Passage(
                    passage_id=record["passage_id"],
                    doc_id=record["doc_id"],
                    text=record["text"],
                    char_span=(record["start"], record["end"]),
                    ordinal=record["ordinal"],
                )
            )
    checksum = _checksum(passages)
    if checksum != manifest["checksum"]:
        raise SnapshotIntegrityError(
            f"snapshot {manifest['snapshot_id']!r} checksum mismatch: "
            f"manifest {manifest['checksum'][:12]}, computed {checksum[:12]}"
        )
    return CorpusSnapshot(
        snapshot_id=manifest["snapshot_id"],
        lang=manifest["lang"],
        version_tag=manifest["version_tag"],
        strategy=SplitStrategy.from_dict(manifest["strategy"]),
        passages=tuple(passages),
        checksum=checksum,
    )


def load_documents(path: str | Path) -> Iterator[Document]:
    """Stream documents from a jsonl file with id/title/text/lang fields."""
    with Path(path).open(encoding="utf-8") as handle:
        for line in handle:
            if not line.strip():
                continue
            record = json.loads(line)
            yield Document(
                doc_id=record["id"],
                title=record.get("title", ""),
                text=record["text"],
                lang=record.get("lang", "en"),
            )

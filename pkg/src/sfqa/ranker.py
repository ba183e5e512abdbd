"""BM25 retrieval: inverted index, top-k queries, reranking, ranking caches.

The scoring path is written so that summation order is fixed (query-term
order, passage by passage), which makes retrieval results reproducible down
to the last float bit for a given snapshot.
"""

from __future__ import annotations

import json
import math
from bisect import bisect_left
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Mapping

from .analysis import index_tokens
from .corpus import CorpusSnapshot
from .errors import MalformedCache, ScorerFailure, UnknownPassage

DEFAULT_K1 = 0.9
DEFAULT_B = 0.4

_CACHE_META_KEY = "_meta"


@dataclass(frozen=True)
class RankedEntry:
    passage_id: str
    score: float
    text: str


@dataclass(frozen=True)
class RankedList:
    """Top-k retrieval result: entries sorted by score desc, ties by id asc."""

    question_id: str
    entries: tuple[RankedEntry, ...]
    k: int

    def __post_init__(self):
        object.__setattr__(self, "entries", tuple(self.entries))
        if self.k < 0:
            raise ValueError("k must be >= 0")
        if len(self.entries) > self.k:
            raise ValueError(
                f"ranked list holds {len(self.entries)} entries but k={self.k}"
            )
        for prev, cur in zip(self.entries, self.entries[1:]):
            if cur.score > prev.score:
                raise ValueError("entries must be sorted by descending score")
            if cur.score == prev.score and cur.passage_id <= prev.passage_id:
                raise ValueError("score ties must be ordered by passage_id")

    def truncated(self, k: int) -> "RankedList":
        """The top-k prefix of this list."""
        return RankedList(self.question_id, self.entries[:k], k)


@dataclass(eq=False)
class InvertedIndex:
    """In-memory BM25 index over one snapshot. Treated as immutable."""

    snapshot_id: str
    snapshot_checksum: str
    lang: str
    k1: float
    b: float
    postings: dict[str, list[tuple[str, int]]]
    doc_lengths: dict[str, int]
    texts: dict[str, str]
    passage_count: int = field(init=False)
    avg_doc_length: float = field(init=False)

    def __post_init__(self):
        self.passage_count = len(self.doc_lengths)
        if self.passage_count == 0:
            raise ValueError("index must cover at least one passage")
        self.avg_doc_length = sum(self.doc_lengths.values()) / self.passage_count

    def idf(self, term: str) -> float:
        """Smoothed inverse document frequency; positive for indexed terms."""
        df = len(self.postings.get(term, ()))
        return math.log(1.0 + (self.passage_count - df + 0.5) / (df + 0.5))

    def _weight(self, idf: float, tf: int, doc_length: int) -> float:
        norm = 1.0 - self.b + self.b * doc_length / self.avg_doc_length
        return idf * (tf * (self.k1 + 1.0)) / (tf + self.k1 * norm)


def build_index(
    snapshot: CorpusSnapshot, k1: float = DEFAULT_K1, b: float = DEFAULT_B
) -> InvertedIndex:
    """Index every passage of a snapshot. Deterministic for a given snapshot."""
    if k1 < 0 or not 0 <= b <= 1:
        raise ValueError(f"bad BM25 parameters k1={k1} b={b}")
    postings: dict[str, dict[str, int]] = {}
    doc_lengths: dict[str, int] = {}
    texts: dict[str, str] = {}
    for passage in snapshot.passages:
        tokens = index_tokens(passage.text, snapshot.lang)
        doc_lengths[passage.passage_id] = len(tokens)
        texts[passage.passage_id] = passage.text
        for token in tokens:
            per_term = postings.setdefault(token, {})
            per_term[passage.passage_id] = per_term.get(passage.passage_id, 0) + 1
    sorted_postings = {
        term: sorted(per_term.items()) for term, per_term in postings.items()
    }
    return InvertedIndex(
        snapshot_id=snapshot.snapshot_id,
        snapshot_checksum=snapshot.checksum,
        lang=snapshot.lang,
        k1=k1,
        b=b,
        postings=sorted_postings,
        doc_lengths=doc_lengths,
        texts=texts,
    )


def bm25_score(index: InvertedIndex, query_terms: list[str], passage_id: str) -> float:
    """BM25 score of one passage for an analyzed query.

    Terms are accumulated in the order given, matching query(), so both paths
    agree bitwise.
    """
    doc_length = index.doc_lengths.get(passage_id)
    if doc_length is None:
        raise UnknownPassage(f"passage {passage_id!r} is not in index {index.snapshot_id!r}")
    score = 0.0
    for term in query_terms:
        plist = index.postings.get(term)
        if not plist:
            continue
        pos = bisect_left(plist, passage_id, key=lambda item: item[0])
        if pos < len(plist) and plist[pos][0] == passage_id:
            score += index._weight(index.idf(term), plist[pos][1], doc_length)
    return score


def query(
    index: InvertedIndex, question_text: str, k: int, question_id: str = ""
) -> RankedList:
    """Top-k passages for a question; candidates share at least one term."""
    if k < 1:
        raise ValueError("k must be >= 1")
    terms = index_tokens(question_text, index.lang)
    accumulated: dict[str, float] = {}
    for term in terms:
        plist = index.postings.get(term)
        if not plist:
            continue
        idf = index.idf(term)
        for passage_id, tf in plist:
            weight = index._weight(idf, tf, index.doc_lengths[passage_id])
            accumulated[passage_id] = accumulated.get(passage_id, 0.0) + weight
    ordered = sorted(accumulated.items(), key=lambda item: (-item[1], item[0]))[:k]
    entries = tuple(
        RankedEntry(passage_id, score, index.texts[passage_id])
        for passage_id, score in ordered
    )
    return RankedList(question_id, entries, k)


def rerank(
    ranked: RankedList, scorer: Callable[[RankedEntry], float]
) -> RankedList:
    """Rescore a ranked list with an arbitrary scorer and re-sort it."""
    rescored = []
    for entry in ranked.entries:
        try:
            value = float(scorer(entry))
        except Exception as exc:
            raise ScorerFailure(
                f"scorer failed on passage {entry.passage_id!r}: {exc}",
                passage_id=entry.passage_id,
            ) from exc
        if not math.isfinite(value):
            raise ScorerFailure(
                f"scorer returned non-finite score for passage {entry.passage_id!r}",
                passage_id=entry.passage_id,
            )
        rescored.append(RankedEntry(entry.passage_id, value, entry.text))
    rescored.sort(key=lambda entry: (-entry.score, entry.passage_id))
    return RankedList(ranked.question_id, tuple(rescored), ranked.k)


@dataclass(frozen=True)
class RankingCache:
    """Precomputed ranked lists, one per question, all of the same depth."""

    snapshot_id: str
    ranker_name: str
    depth: int
    results: Mapping[str, RankedList]


def build_cache(
    index: InvertedIndex,
    questions: Iterable[tuple[str, str]],
    depth: int,
    ranker_name: str = "bm25",
) -> RankingCache:
    """Run every (question_id, question_text) pair through query() at depth."""
    results: dict[str, RankedList] = {}
    for question_id, question_text in questions:
        if question_id in results:
            raise ValueError(f"question id {question_id!r} appears twice")
        results[question_id] = query(index, question_text, depth, question_id)
    return RankingCache(index.snapshot_id, ranker_name, depth, results)


def _cache_payload(cache: RankingCache) -> dict:
    payload: dict = {}
    passage_ids: dict[str, list[str]] = {}
    for question_id in sorted(cache.results):
        if question_id == _CACHE_META_KEY:
            raise MalformedCache(
                f"question id {_CACHE_META_KEY!r} collides with the metadata key",
                question_id=question_id,
            )
        ranked = cache.results[question_id]
        payload[question_id] = [
            {"answer": entry.text, "score": entry.score} for entry in ranked.entries
        ]
        passage_ids[question_id] = [entry.passage_id for entry in ranked.entries]
    payload[_CACHE_META_KEY] = {
        "snapshot_id": cache.snapshot_id,
        "ranker": cache.ranker_name,
        "depth": cache.depth,
        "passage_ids": passage_ids,
    }
    return payload


def cache_payload_bytes(cache: RankingCache) -> bytes:
    """Canonical UTF-8 JSON for a cache; also the exact bytes write_cache emits."""
    return json.dumps(
        _cache_payload(cache), ensure_ascii=False, sort_keys=True, separators=(",", ":")
    ).encode("utf-8")


def write_cache(cache: RankingCache, destination: str | Path) -> None:
    """Write a cache file. Single-writer: no concurrent writes to one path."""
    Path(destination).write_bytes(cache_payload_bytes(cache))


def _meta_field(meta: dict, key: str, kind: type, question_id: str | None = None):
    value = meta.get(key)
    if not isinstance(value, kind) or isinstance(value, bool):
        raise MalformedCache(f"_meta.{key} must be {kind.__name__}", question_id)
    return value


def read_cache(source: str | Path) -> RankingCache:
    """Parse and validate a cache file.

    Files without _meta (the bare wire format) are accepted; passage ids are
    then synthesized per rank so downstream joins stay deterministic.
    """
    try:
        text = Path(source).read_text(encoding="utf-8")
    except OSError as exc:
        raise MalformedCache(f"cannot read cache: {exc}") from exc
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise MalformedCache(f"cache is not valid JSON: {exc}") from exc
    if not isinstance(data, dict):
        raise MalformedCache("cache top level must be a JSON object")

    meta = data.get(_CACHE_META_KEY)
    passage_ids: dict = {}
    snapshot_id = ""
    ranker_name = ""
    depth: int | None = None
    if meta is not None:
        if not isinstance(meta, dict):
            raise MalformedCache("_meta must be a JSON object")
        snapshot_id = _meta_field(meta, "snapshot_id", str)
        ranker_name = _meta_field(meta, "ranker", str)
        depth = _meta_field(meta, "depth", int)
        if depth < 0:
            raise MalformedCache("_meta.depth must be >= 0")
        passage_ids = _meta_field(meta, "passage_ids", dict)

    parsed: dict[str, list[tuple[str, float, str]]] = {}
    for question_id, raw_entries in data.items():
        if question_id == _CACHE_META_KEY:
            continue
        if not isinstance(raw_entries, list):
            raise MalformedCache(
                f"entries for {question_id!r} must be an array", question_id
            )
        pids = passage_ids.get(question_id)
        if pids is not None:
            if not isinstance(pids, list) or len(pids) != len(raw_entries):
                raise MalformedCache(
                    f"_meta.passage_ids for {question_id!r} does not match entries",
                    question_id,
                )
        previous = None
        entries = []
        for rank, item in enumerate(raw_entries):
            if not isinstance(item, dict):
                raise MalformedCache(
                    f"entry {rank} for {question_id!r} must be an object", question_id
                )
            score = item.get("score")
            answer = item.get("answer")
            if not isinstance(score, (int, float)) or isinstance(score, bool):
                raise MalformedCache(
                    f"entry {rank} for {question_id!r} has a non-numeric score",
                    question_id,
                )
            if not isinstance(answer, str):
                raise MalformedCache(
                    f"entry {rank} for {question_id!r} has a non-string answer",
                    question_id,
                )
            if previous is not None and score > previous:
                raise MalformedCache(
                    f"scores for {question_id!r} are not in descending order",
                    question_id,
                )
            previous = score
            if pids is not None:
                passage_id = pids[rank]
                if not isinstance(passage_id, str) or not passage_id:
                    raise MalformedCache(
                        f"_meta.passage_ids for {question_id!r} has a bad id",
                        question_id,
                    )
            else:
                passage_id = f"{question_id}::rank{rank:04d}"
            entries.append((passage_id, float(score), answer))
        parsed[question_id] = entries

    if depth is None:
        depth = max((len(entries) for entries in parsed.values()), default=0)
    results: dict[str, RankedList] = {}
    for question_id, entries in parsed.items():
        if len(entries) > depth:
            raise MalformedCache(
                f"{question_id!r} holds {len(entries)} entries but depth is {depth}",
                question_id,
            )
        try:
            results[question_id] = RankedList(
                question_id,
                tuple(RankedEntry(pid, score, answer) for pid, score, answer in entries),
                depth,
            )
        except ValueError as exc:
            raise MalformedCache(str(exc), question_id) from exc
    return RankingCache(snapshot_id, ranker_name, depth, results)


def save_index(index: InvertedIndex, path: str | Path) -> None:
    """Persist an index as JSON; load_index() restores it losslessly."""
    data = {
        "format": "sfqa-index-v1",
        "snapshot_id": index.snapshot_id,
        "snapshot_checksum": index.snapshot_checksum,
        "lang": index.lang,
        "k1": index.k1,
        "b": index.b,
        "doc_lengths": index.doc_lengths,
        "texts": index.texts,
        "postings": {
            term: [[pid, tf] for pid, tf in plist]
            for term, plist in index.postings.items()
        },
    }
    Path(path).write_text(
        json.dumps(data, ensure_ascii=False, sort_keys=True), encoding="utf-8"
    )


def load_index(path: str | Path) -> InvertedIndex:
    data = json.loads(Path(path).read_text(encoding="utf-8"))
    if data.get("format") != "sfqa-index-v1":
        raise ValueError(f"{path} is not a saved index")
    return InvertedIndex(
        snapshot_id=data["snapshot_id"],
        snapshot_checksum=data["snapshot_checksum"],
        lang=data["lang"],
        k1=data["k1"],
        b=data["b"],
        postings={
            term: [(pid, tf) for pid, tf in plist]
            for term, plist in data["postings"].items()
        },
        doc_lengths=data["doc_lengths"],
        texts=data["texts"],
    )

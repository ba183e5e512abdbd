"""Declarative end-to-end runs: YAML config, orchestration, run manifests.

A run is a pure function of (config, dataset, retrieval source): ranked
lists come from a live index or a cache, the configured reader proposes
spans, fusion merges scores, evaluation aggregates metrics, and a manifest
records digests of everything that could change the numbers.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
from concurrent.futures import ThreadPoolExecutor, as_completed
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path
from typing import IO, Sequence, Union

import yaml

from .corpus import CorpusSnapshot, load_snapshot
from .errors import (
    CacheMiss,
    CacheTooShallow,
    ConfigParseError,
    ConfigValidationError,
    DuplicateQuestionId,
    EmptyDataset,
)
from .evaluation import DEFAULT_KS, MetricsReport, QAExample, evaluate
from .fusion import FusionParams, NormKind, ReaderScoreType, fuse
from .ranker import (
    InvertedIndex,
    RankingCache,
    build_index,
    cache_payload_bytes,
    load_index,
    query,
    read_cache,
)
from .reader import ReaderKind, ReaderSpec, build_reader

DATA_DIR_ENV = "SFQA_DATA_DIR"
READER_ENDPOINT_ENV = "SFQA_READER_ENDPOINT"

logger = logging.getLogger("sfqa")

_SCORE_TYPES = {t.value: t for t in ReaderScoreType}
_NORM_KINDS = {n.value: n for n in NormKind}


# --- configuration ----------------------------------------------------------


@dataclass(frozen=True)
class DataConfig:
    lang: str
    name: str
    split: str


@dataclass(frozen=True)
class RankerModelConfig:
    name: str
    es_index_name: str


@dataclass(frozen=True)
class RankerConfig:
    use_cached: bool
    model: RankerModelConfig | None = None
    cache_path: str | None = None


@dataclass(frozen=True)
class ReaderConfig:
    model_id: str
    endpoint: str | None = None


@dataclass(frozen=True)
class ParamConfig:
    score_weight: float
    top_k: int
    n_gpu: int = 0
    reader_score_type: ReaderScoreType = ReaderScoreType.PROBABILITY
    norm_rank: NormKind = NormKind.FLOOR
    norm_reader: NormKind = NormKind.NONE
    final_k: int = 5


@dataclass(frozen=True)
class PipelineConfig:
    data: DataConfig
    ranker: RankerConfig
    reader: ReaderConfig
    param: ParamConfig

    def to_dict(self) -> dict:
        """Plain mapping with every effective field, defaults included."""
        ranker: dict = {"use_cached": self.ranker.use_cached}
        if self.ranker.cache_path is not None:
            ranker["cache_path"] = self.ranker.cache_path
        if self.ranker.model is not None:
            ranker["model"] = {
                "name": self.ranker.model.name,
                "es_index_name": self.ranker.model.es_index_name,
            }
        reader: dict = {"model_id": self.reader.model_id}
        if self.reader.endpoint is not None:
            reader["endpoint"] = self.reader.endpoint
        return {
            "data": {
                "lang": self.data.lang,
                "name": self.data.name,
                "split": self.data.split,
            },
            "ranker": ranker,
            "reader": reader,
            "param": {
                "n_gpu": self.param.n_gpu,
                "score_weight": self.param.score_weight,
                "top_k": self.param.top_k,
                "reader_score_type": self.param.reader_score_type.value,
                "norm_rank": self.param.norm_rank.value,
                "norm_reader": self.param.norm_reader.value,
                "final_k": self.param.final_k,
            },
        }


def _expect_mapping(value, path: str) -> dict:
    if not isinstance(value, dict):
        raise ConfigValidationError(path, "must be a mapping")
    return value


def _reject_unknown(mapping: dict, allowed: set[str], path: str) -> None:
    unknown = sorted(set(mapping) - allowed)
    if unknown:
        prefix = f"{path}." if path else ""
        raise ConfigValidationError(f"{prefix}{unknown[0]}", "unknown key")


def _required(mapping: dict, key: str, path: str):
    if key not in mapping:
        raise ConfigValidationError(f"{path}.{key}", "is required")
    return mapping[key]


def _string(value, path: str) -> str:
    if not isinstance(value, str) or not value:
        raise ConfigValidationError(path, "must be a nonempty string")
    return value


def _strict_int(value, path: str, minimum: int) -> int:
    if not isinstance(value, int) or isinstance(value, bool) or value < minimum:
        raise ConfigValidationError(path, f"must be an integer >= {minimum}")
    return value


def load_config(source: Union[str, Path, IO[str]]) -> PipelineConfig:
    """Parse and validate a config.

    source may be YAML text, a Path, or an open file. Unknown keys are
    rejected at every level so typos cannot silently change a run.
    """
    if isinstance(source, Path):
        text = source.read_text(encoding="utf-8")
    elif hasattr(source, "read"):
        text = source.read()
    else:
        text = source
    try:
        raw = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        line = mark.line + 1 if mark is not None else None
        column = mark.column + 1 if mark is not None else None
        raise ConfigParseError(
            f"config is not valid YAML: {exc}", line=line, column=column
        ) from exc
    root = _expect_mapping(raw, "<config>")
    _reject_unknown(root, {"data", "ranker", "reader", "param"}, "")

    data_raw = _expect_mapping(_required(root, "data", "<config>"), "data")
    _reject_unknown(data_raw, {"lang", "name", "split"}, "data")
    lang = _string(_required(data_raw, "lang", "data"), "data.lang")
    if lang not in ("en", "zh"):
        raise ConfigValidationError("data.lang", "must be 'en' or 'zh'")
    data = DataConfig(
        lang=lang,
        name=_string(_required(data_raw, "name", "data"), "data.name"),
        split=_string(_required(data_raw, "split", "data"), "data.split"),
    )

    ranker_raw = _expect_mapping(_required(root, "ranker", "<config>"), "ranker")
    _reject_unknown(ranker_raw, {"use_cached", "cache_path", "model"}, "ranker")
    use_cached = _required(ranker_raw, "use_cached", "ranker")
    if not isinstance(use_cached, bool):
        raise ConfigValidationError("ranker.use_cached", "must be a boolean")
    model = None
    if "model" in ranker_raw:
        model_raw = _expect_mapping(ranker_raw["model"], "ranker.model")
        _reject_unknown(model_raw, {"name", "es_index_name"}, "ranker.model")
        model = RankerModelConfig(
            name=_string(_required(model_raw, "name", "ranker.model"), "ranker.model.name"),
            es_index_name=_string(
                _required(model_raw, "es_index_name", "ranker.model"),
                "ranker.model.es_index_name",
            ),
        )
    cache_path = None
    if "cache_path" in ranker_raw:
        cache_path = _string(ranker_raw["cache_path"], "ranker.cache_path")
    if use_cached and cache_path is None:
        raise ConfigValidationError("ranker.cache_path", "is required when use_cached is true")
    if not use_cached and model is None:
        raise ConfigValidationError("ranker.model", "is required when use_cached is false")
    ranker = RankerConfig(use_cached=use_cached, model=model, cache_path=cache_path)

    reader_raw = _expect_mapping(_required(root, "reader", "<config>"), "reader")
    _reject_unknown(reader_raw, {"model_id", "endpoint"}, "reader")
    endpoint = None
    if "endpoint" in reader_raw:
        endpoint = _string(reader_raw["endpoint"], "reader.endpoint")
    reader = ReaderConfig(
        model_id=_string(_required(reader_raw, "model_id", "reader"), "reader.model_id"),
        endpoint=endpoint,
    )

    param_raw = _expect_mapping(_required(root, "param", "<config>"), "param")
    _reject_unknown(
        param_raw,
        {
            "n_gpu",
            "score_weight",
            "top_k",
            "reader_score_type",
            "norm_rank",
            "norm_reader",
            "final_k",
        },
        "param",
    )
    score_weight = _required(param_raw, "score_weight", "param")
    if (
        not isinstance(score_weight, (int, float))
        or isinstance(score_weight, bool)
        or not 0.0 <= score_weight <= 1.0
    ):
        raise ConfigValidationError("param.score_weight", "must be a number in [0, 1]")
    top_k = _strict_int(_required(param_raw, "top_k", "param"), "param.top_k", 1)
    n_gpu = _strict_int(param_raw.get("n_gpu", 0), "param.n_gpu", 0)
    score_type_raw = param_raw.get("reader_score_type", ReaderScoreType.PROBABILITY.value)
    if score_type_raw not in _SCORE_TYPES:
        raise ConfigValidationError(
            "param.reader_score_type", f"must be one of {sorted(_SCORE_TYPES)}"
        )
    norms = {}
    for key, default in (("norm_rank", NormKind.FLOOR), ("norm_reader", NormKind.NONE)):
        value = param_raw.get(key, default.value)
        if value not in _NORM_KINDS:
            raise ConfigValidationError(f"param.{key}", f"must be one of {sorted(_NORM_KINDS)}")
        norms[key] = _NORM_KINDS[value]
    param = ParamConfig(
        score_weight=float(score_weight),
        top_k=top_k,
        n_gpu=n_gpu,
        reader_score_type=_SCORE_TYPES[score_type_raw],
        norm_rank=norms["norm_rank"],
        norm_reader=norms["norm_reader"],
        final_k=_strict_int(param_raw.get("final_k", 5), "param.final_k", 1),
    )
    return PipelineConfig(data=data, ranker=ranker, reader=reader, param=param)


def dump_config(config: PipelineConfig) -> str:
    """YAML for a config; load_config(dump_config(c)) == c."""
    return yaml.safe_dump(config.to_dict(), sort_keys=False, allow_unicode=True)


# --- digests ----------------------------------------------------------------


def canonical_json(value) -> str:
    """Key-sorted, separator-pinned JSON; the basis of every digest."""
    return json.dumps(value, ensure_ascii=False, sort_keys=True, separators=(",", ":"))


def sha256_hex(data: Union[bytes, str]) -> str:
    if isinstance(data, str):
        data = data.encode("utf-8")
    return hashlib.sha256(data).hexdigest()


def config_digest(config: PipelineConfig) -> str:
    return sha256_hex(canonical_json(config.to_dict()))


def cache_digest(cache: RankingCache) -> str:
    return sha256_hex(cache_payload_bytes(cache))


def report_digest(report: MetricsReport) -> str:
    return sha256_hex(canonical_json(report.to_dict(verbose=True)))


# --- data layout ------------------------------------------------------------


def default_data_dir() -> Path:
    return Path(os.environ.get(DATA_DIR_ENV, "sfqa-data"))


def snapshot_dir(data_dir: Union[str, Path], snapshot_id: str) -> Path:
    return Path(data_dir) / "snapshots" / snapshot_id


def load_or_build_index(snapshot_directory: Union[str, Path]) -> InvertedIndex:
    """Use the saved index.json if present, otherwise index the snapshot."""
    snapshot_directory = Path(snapshot_directory)
    index_path = snapshot_directory / "index.json"
    if index_path.exists():
        return load_index(index_path)
    return build_index(load_snapshot(snapshot_directory))


def resolve_source(
    config: PipelineConfig, data_dir: Union[str, Path, None] = None
) -> Union[InvertedIndex, RankingCache]:
    """Locate the retrieval source a config points at.

    Cached runs read ranker.cache_path (tried as given, then under the data
    dir); live runs use the snapshot named by ranker.model.es_index_name
    under <data_dir>/snapshots/.
    """
    base = Path(data_dir) if data_dir is not None else default_data_dir()
    if config.ranker.use_cached:
        path = Path(config.ranker.cache_path)
        if not path.exists() and not path.is_absolute():
            candidate = base / config.ranker.cache_path
            if candidate.exists():
                path = candidate
        return read_cache(path)
    return load_or_build_index(snapshot_dir(base, config.ranker.model.es_index_name))


# --- runs -------------------------------------------------------------------


@dataclass(frozen=True)
class RunManifest:
    """Everything needed to audit a run's provenance and reproducibility."""

    config_digest: str
    snapshot_id: str
    snapshot_checksum: str | None
    cache_digest: str | None
    ranker_id: str
    reader_id: str
    report_digest: str
    started_at: str
    finished_at: str
    workers: int
    stage_counters: dict[str, int]
    config: dict

    def to_dict(self) -> dict:
        return {
            "config_digest": self.config_digest,
            "snapshot_id": self.snapshot_id,
            "snapshot_checksum": self.snapshot_checksum,
            "cache_digest": self.cache_digest,
            "ranker_id": self.ranker_id,
            "reader_id": self.reader_id,
            "report_digest": self.report_digest,
            "started_at": self.started_at,
            "finished_at": self.finished_at,
            "workers": self.workers,
            "stage_counters": dict(self.stage_counters),
            "config": self.config,
        }


def default_ks(top_k: int) -> tuple[int, ...]:
    """Cutoffs reported for a run: the standard ones capped by top_k."""
    return tuple(sorted({k for k in DEFAULT_KS if k <= top_k} | {top_k}))


def _utcnow() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def reader_spec_for(config: PipelineConfig) -> ReaderSpec:
    """Reader selection: SFQA_READER_ENDPOINT overrides reader.endpoint."""
    endpoint = os.environ.get(READER_ENDPOINT_ENV) or config.reader.endpoint
    if endpoint:
        return ReaderSpec(
            kind=ReaderKind.REMOTE, model_id=config.reader.model_id, endpoint=endpoint
        )
    return ReaderSpec(kind=ReaderKind.BUILTIN_LEXICAL, model_id=config.reader.model_id)


def run(
    config: PipelineConfig,
    examples: Sequence[QAExample],
    source: Union[CorpusSnapshot, InvertedIndex, RankingCache, None] = None,
    *,
    workers: int = 1,
    data_dir: Union[str, Path, None] = None,
) -> tuple[MetricsReport, RunManifest]:
    """Execute one evaluation run and return (report, manifest).

    source may be a prebuilt index, a snapshot (indexed here), a ranking
    cache, or None to resolve from the config and data dir. Per-question
    reading and fusion run on up to `workers` threads; results are reduced
    in question-id order, so the report is identical for any worker count.
    """
    if not examples:
        raise EmptyDataset("the dataset holds no questions")
    if workers < 1:
        raise ValueError("workers must be >= 1")
    seen: set[str] = set()
    for example in examples:
        if example.question_id in seen:
            raise DuplicateQuestionId(f"question id {example.question_id!r} appears twice")
        seen.add(example.question_id)

    started = _utcnow()
    counters = {"index_builds": 0, "index_queries": 0, "cache_lookups": 0, "reader_calls": 0}
    if source is None:
        source = resolve_source(config, data_dir)

    top_k = config.param.top_k
    snapshot_checksum: str | None = None
    cache_dig: str | None = None
    rankings = {}
    if config.ranker.use_cached:
        if not isinstance(source, RankingCache):
            raise TypeError("use_cached runs need a RankingCache source")
        if source.depth < top_k:
            raise CacheTooShallow(
                f"cache depth {source.depth} cannot serve top_k {top_k}",
                question_id="",
                depth=source.depth,
            )
        for example in examples:
            ranked = source.results.get(example.question_id)
            if ranked is None:
                raise CacheMiss(
                    f"question {example.question_id!r} is not in the cache",
                    question_id=example.question_id,
                )
            rankings[example.question_id] = ranked.truncated(top_k)
            counters["cache_lookups"] += 1
        snapshot_id = source.snapshot_id
        ranker_id = f"cached:{source.ranker_name}" if source.ranker_name else "cached"
        cache_dig = cache_digest(source)
    else:
        if isinstance(source, CorpusSnapshot):
            index = build_index(source)
            counters["index_builds"] = 1
        elif isinstance(source, InvertedIndex):
            index = source
        else:
            raise TypeError("live runs need a CorpusSnapshot or InvertedIndex source")
        for example in examples:
            rankings[example.question_id] = query(
                index, example.question, top_k, example.question_id
            )
            counters["index_queries"] += 1
        snapshot_id = index.snapshot_id
        snapshot_checksum = index.snapshot_checksum
        ranker_id = f"bm25(k1={index.k1},b={index.b})"

    spec = reader_spec_for(config)
    reader = build_reader(spec)
    params = FusionParams(
        alpha=config.param.score_weight,
        reader_score_type=config.param.reader_score_type,
        norm_rank=config.param.norm_rank,
        norm_reader=config.param.norm_reader,
        final_k=config.param.final_k,
    )

    def answer_one(example: QAExample):
        ranked = rankings[example.question_id]
        passages = [(entry.passage_id, entry.text) for entry in ranked.entries]
        if not passages:
            return example.question_id, []
        candidates = reader.read(
            example.question, passages, example.question_id, example.lang
        )
        if not candidates:
            return example.question_id, []
        return example.question_id, fuse(candidates, ranked, params, example.lang)

    predictions = {}
    completed = 0
    try:
        if workers == 1:
            for example in examples:
                question_id, answers = answer_one(example)
                predictions[question_id] = answers
                completed += 1
        else:
            with ThreadPoolExecutor(max_workers=workers) as pool:
                futures = [pool.submit(answer_one, example) for example in examples]
                for future in as_completed(futures):
                    question_id, answers = future.result()
                    predictions[question_id] = answers
                    completed += 1
    except Exception as exc:
        logger.error(
            "run aborted after %d/%d questions: %s", completed, len(examples), exc
        )
        raise
    counters["reader_calls"] = sum(
        1 for example in examples if rankings[example.question_id].entries
    )

    report = evaluate(examples, rankings, predictions, ks=default_ks(top_k))
    manifest = RunManifest(
        config_digest=config_digest(config),
        snapshot_id=snapshot_id,
        snapshot_checksum=snapshot_checksum,
        cache_digest=cache_dig,
        ranker_id=ranker_id,
        reader_id=spec.reader_id,
        report_digest=report_digest(report),
        started_at=started,
        finished_at=_utcnow(),
        workers=workers,
        stage_counters=counters,
        config=config.to_dict(),
    )
    return report, manifest

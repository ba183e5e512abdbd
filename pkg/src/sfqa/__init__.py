"""Modular ranker-reader question answering evaluation.

Corpus snapshots -> BM25 retrieval (live or cached) -> span-extracting
readers -> score fusion -> multi-metric reports, all reproducible from a
single YAML config.
"""

from .corpus import (
    CorpusSnapshot,
    Document,
    Passage,
    SplitKind,
    SplitStrategy,
    build_snapshot,
    load_documents,
    load_snapshot,
    save_snapshot,
    segment_sentences,
    split_document,
)
from .errors import SfqaError
from .evaluation import (
    MetricsReport,
    QAExample,
    QuestionDiagnostics,
    evaluate,
    exact_match,
    f1,
    first_hit_rank,
    load_dataset,
    mrr,
    recall_at_k,
)
from .fusion import (
    FusionParams,
    NormKind,
    ReaderScoreType,
    ScoredAnswer,
    aggregate,
    fuse,
    normalize,
)
from .pipeline import (
    DataConfig,
    ParamConfig,
    PipelineConfig,
    RankerConfig,
    RankerModelConfig,
    ReaderConfig,
    RunManifest,
    cache_digest,
    canonical_json,
    config_digest,
    default_data_dir,
    default_ks,
    dump_config,
    load_config,
    reader_spec_for,
    report_digest,
    resolve_source,
    run,
    snapshot_dir,
)
from .ranker import (
    InvertedIndex,
    RankedEntry,
    RankedList,
    RankingCache,
    bm25_score,
    build_cache,
    build_index,
    load_index,
    query,
    read_cache,
    rerank,
    save_index,
    write_cache,
)
from .reader import (
    BuiltinLexicalReader,
    ReaderKind,
    ReaderSpec,
    RemoteReader,
    SpanCandidate,
    build_reader,
    builtin_lexical_score,
    read,
)
from .service import create_app

__version__ = "0.1.0"

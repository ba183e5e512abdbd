"""Command line interface.

Subcommands: index (build a snapshot + BM25 index), rank (precompute a
ranking cache), serve (HTTP ranking service), run (full evaluation run),
eval (metrics over prediction files). Exit codes: 0 success, 1 usage error,
2 runtime failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .corpus import SplitStrategy, build_snapshot, load_documents, save_snapshot
from .errors import CacheMiss, SfqaError
from .evaluation import evaluate, load_dataset
from .fusion import ScoredAnswer
from .pipeline import (
    DATA_DIR_ENV,
    cache_digest,
    default_data_dir,
    load_config,
    load_or_build_index,
    run as run_pipeline,
    snapshot_dir,
)
from .ranker import RankedList, build_cache, build_index, read_cache, save_index, write_cache
from .service import create_app


class _UsageError(Exception):
    """Bad flag combination detected after argparse."""


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 on usage errors; this interface reserves 2 for
    # runtime failures and uses 1 for usage.
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _add_data_dir(parser: argparse.ArgumentParser) -> None:
    parser.add_argument(
        "--data-dir",
        default=None,
        help=f"snapshot root (default: ${DATA_DIR_ENV} or ./sfqa-data)",
    )


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="sfqa", description="ranker-reader QA evaluation toolkit")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    index_p = sub.add_parser("index", help="split a corpus and build its BM25 index")
    index_p.add_argument("--corpus", required=True, help="jsonl of documents (id/title/text/lang)")
    index_p.add_argument("--snapshot-id", required=True)
    index_p.add_argument("--version-tag", required=True)
    index_p.add_argument(
        "--strategy",
        required=True,
        choices=["sentence", "paragraph", "chunk", "context"],
    )
    index_p.add_argument("--chunk-size", type=int, default=None)
    index_p.add_argument("--stride", type=int, default=None)
    index_p.add_argument("--max-tokens", type=int, default=None)
    index_p.add_argument("--k1", type=float, default=0.9)
    index_p.add_argument("--b", type=float, default=0.4)
    _add_data_dir(index_p)
    index_p.set_defaults(func=_cmd_index)

    rank_p = sub.add_parser("rank", help="precompute a ranking cache for a dataset")
    rank_p.add_argument("--questions", required=True, help="jsonl dataset (id/question/answers/lang)")
    rank_p.add_argument("--index", required=True, metavar="SNAPSHOT_ID")
    rank_p.add_argument("--top-k", type=int, required=True)
    rank_p.add_argument("--out", required=True)
    rank_p.add_argument("--ranker-name", default="bm25")
    _add_data_dir(rank_p)
    rank_p.set_defaults(func=_cmd_rank)

    serve_p = sub.add_parser("serve", help="serve every snapshot index over HTTP")
    serve_p.add_argument("--host", default="127.0.0.1")
    serve_p.add_argument("--port", type=int, default=8080)
    _add_data_dir(serve_p)
    serve_p.set_defaults(func=_cmd_serve)

    run_p = sub.add_parser("run", help="run retrieval + reading + fusion + metrics")
    run_p.add_argument("--config", required=True)
    run_p.add_argument("--dataset", required=True)
    run_p.add_argument("--workers", type=int, default=1)
    run_p.add_argument("--report", default=None, help="write the full report JSON here")
    run_p.add_argument("--manifest", default=None, help="write the run manifest JSON here")
    run_p.add_argument("--verbose", action="store_true", help="include per-question rows on stdout")
    _add_data_dir(run_p)
    run_p.set_defaults(func=_cmd_run)

    eval_p = sub.add_parser("eval", help="score a predictions file against a dataset")
    eval_p.add_argument("--dataset", required=True)
    eval_p.add_argument("--predictions", required=True)
    eval_p.add_argument("--rankings", default=None, help="ranking cache for retrieval metrics")
    eval_p.add_argument("--report", default=None)
    eval_p.add_argument("--verbose", action="store_true")
    eval_p.set_defaults(func=_cmd_eval)

    return parser


def _strategy_from_args(args) -> SplitStrategy:
    if args.strategy == "chunk":
        if args.chunk_size is None or args.stride is None:
            raise _UsageError("--strategy chunk needs --chunk-size and --stride")
        return SplitStrategy.chunk(args.chunk_size, args.stride)
    if args.strategy == "context":
        if args.max_tokens is None:
            raise _UsageError("--strategy context needs --max-tokens")
        return SplitStrategy.context(args.max_tokens)
    for name in ("chunk_size", "stride", "max_tokens"):
        if getattr(args, name) is not None:
            raise _UsageError(f"--{name.replace('_', '-')} is not valid for --strategy {args.strategy}")
    if args.strategy == "sentence":
        return SplitStrategy.sentence()
    return SplitStrategy.paragraph()


def _emit(payload: dict) -> None:
    print(json.dumps(payload, ensure_ascii=False, indent=2))


def _write_json(path: str, payload: dict) -> None:
    Path(path).write_text(
        json.dumps(payload, ensure_ascii=False, indent=2) + "\n", encoding="utf-8"
    )


def _cmd_index(args) -> int:
    strategy = _strategy_from_args(args)
    snapshot = build_snapshot(
        load_documents(args.corpus), strategy, args.snapshot_id, args.version_tag
    )
    directory = snapshot_dir(args.data_dir or default_data_dir(), snapshot.snapshot_id)
    save_snapshot(snapshot, directory)
    index = build_index(snapshot, k1=args.k1, b=args.b)
    save_index(index, directory / "index.json")
    _emit(
        {
            "snapshot_id": snapshot.snapshot_id,
            "version_tag": snapshot.version_tag,
            "passages": snapshot.passage_count,
            "checksum": snapshot.checksum,
            "directory": str(directory),
        }
    )
    return 0


def _cmd_rank(args) -> int:
    examples = load_dataset(args.questions)
    index = load_or_build_index(snapshot_dir(args.data_dir or default_data_dir(), args.index))
    cache = build_cache(
        index,
        [(example.question_id, example.question) for example in examples],
        depth=args.top_k,
        ranker_name=args.ranker_name,
    )
    write_cache(cache, args.out)
    _emit(
        {
            "questions": len(examples),
            "depth": args.top_k,
            "cache": args.out,
            "cache_digest": cache_digest(cache),
        }
    )
    return 0


def _cmd_serve(args) -> int:
    import uvicorn

    root = Path(args.data_dir or default_data_dir()) / "snapshots"
    indexes = {}
    if root.is_dir():
        for directory in sorted(root.iterdir()):
            if directory.is_dir() and (directory / "manifest.json").exists():
                indexes[directory.name] = load_or_build_index(directory)
    app = create_app(indexes)
    print(f"serving {len(indexes)} index(es) on {args.host}:{args.port}", file=sys.stderr)
    uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
    return 0


def _cmd_run(args) -> int:
    config = load_config(Path(args.config))
    examples = load_dataset(args.dataset)
    report, manifest = run_pipeline(
        config, examples, None, workers=args.workers, data_dir=args.data_dir
    )
    _emit(report.to_dict(verbose=args.verbose))
    if args.report:
        _write_json(args.report, report.to_dict(verbose=True))
    if args.manifest:
        _write_json(args.manifest, manifest.to_dict())
    return 0


def _parse_predictions(path: str) -> dict[str, list[ScoredAnswer]]:
    """Accepts {qid: "answer"} or {qid: [{"answer": ..., "score": ...}, ...]}."""
    data = json.loads(Path(path).read_text(encoding="utf-8"))
    if not isinstance(data, dict):
        raise SfqaError("predictions file must be a JSON object keyed by question id")
    predictions: dict[str, list[ScoredAnswer]] = {}
    for question_id, value in data.items():
        if isinstance(value, str):
            entries = [{"answer": value}] if value else []
        elif isinstance(value, list):
            entries = value
        else:
            raise SfqaError(
                f"prediction for {question_id!r} must be a string or an array"
            )
        answers = []
        for i, item in enumerate(entries):
            if not isinstance(item, dict) or not isinstance(item.get("answer"), str):
                raise SfqaError(
                    f"prediction {i} for {question_id!r} needs a string 'answer'"
                )
            score = item.get("score", 0.0)
            if not isinstance(score, (int, float)) or isinstance(score, bool):
                raise SfqaError(f"prediction {i} for {question_id!r} has a bad score")
            answers.append(
                ScoredAnswer(
                    question_id=question_id,
                    answer_text=item["answer"],
                    y=float(score),
                    y_reader=0.0,
                    y_rank=0.0,
                    passage_id=str(item.get("passage_id", "")),
                    rank_in_list=0,
                )
            )
        predictions[question_id] = answers
    return predictions


def _cmd_eval(args) -> int:
    examples = load_dataset(args.dataset)
    predictions = _parse_predictions(args.predictions)
    if args.rankings:
        cache = read_cache(args.rankings)
        rankings = {}
        for example in examples:
            ranked = cache.results.get(example.question_id)
            if ranked is None:
                raise CacheMiss(
                    f"question {example.question_id!r} is not in the rankings cache",
                    question_id=example.question_id,
                )
            rankings[example.question_id] = ranked
    else:
        # No rankings: EM/F1 still meaningful, retrieval metrics read as 0.
        rankings = {
            example.question_id: RankedList(example.question_id, (), 0)
            for example in examples
        }
    report = evaluate(examples, rankings, predictions)
    _emit(report.to_dict(verbose=args.verbose))
    if args.report:
        _write_json(args.report, report.to_dict(verbose=True))
    return 0


def cli(argv=None) -> int:
    """Parse and dispatch; returns the process exit code."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        if isinstance(exc.code, int):
            return exc.code
        return 0 if exc.code is None else 1
    try:
        return args.func(args)
    except _UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except (SfqaError, OSError, ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


def main() -> None:
    sys.exit(cli(sys.argv[1:]))

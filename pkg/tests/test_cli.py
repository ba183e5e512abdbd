"""Command line interface: subcommands, artifacts, and exit codes."""

import json
import socket
import subprocess
import sys
import time

import pytest
import requests

from sfqa import read_cache
from sfqa.cli import cli
from sfqa.pipeline import DATA_DIR_ENV, cache_digest

DOCS = [
    {"id": "doc-fr", "title": "France", "text": "paris is the capital of france", "lang": "en"},
    {"id": "doc-de", "title": "Germany", "text": "berlin is the capital of germany", "lang": "en"},
    {"id": "doc-jp", "title": "Japan", "text": "tokyo hosts the emperor of japan", "lang": "en"},
]

QUESTIONS = [
    {"id": "q1", "question": "what is the capital of france", "answers": ["paris"], "lang": "en"},
    {"id": "q2", "question": "what is the capital of germany", "answers": ["berlin"], "lang": "en"},
]

CONFIG = """\
data:
  lang: en
  name: demo
  split: dev
ranker:
  use_cached: false
  model:
    name: bm25
    es_index_name: wiki-en
reader:
  model_id: lexical-v1
param:
  score_weight: 0.5
  top_k: 2
  final_k: 3
"""


def _write_jsonl(path, rows):
    path.write_text("\n".join(json.dumps(r, ensure_ascii=False) for r in rows) + "\n", "utf-8")


@pytest.fixture()
def workspace(tmp_path):
    corpus = tmp_path / "corpus.jsonl"
    dataset = tmp_path / "dev.jsonl"
    config = tmp_path / "run.yaml"
    _write_jsonl(corpus, DOCS)
    _write_jsonl(dataset, QUESTIONS)
    config.write_text(CONFIG, "utf-8")
    return tmp_path


def _index_args(workspace, data_dir):
    return [
        "index",
        "--corpus", str(workspace / "corpus.jsonl"),
        "--snapshot-id", "wiki-en",
        "--version-tag", "2026-08",
        "--strategy", "sentence",
        "--data-dir", str(data_dir),
    ]


def test_index_builds_snapshot_and_saved_index(workspace, capsys):
    data_dir = workspace / "data"
    assert cli(_index_args(workspace, data_dir)) == 0
    summary = json.loads(capsys.readouterr().out)
    assert summary["snapshot_id"] == "wiki-en"
    assert summary["version_tag"] == "2026-08"
    assert summary["passages"] == 3
    home = data_dir / "snapshots" / "wiki-en"
    assert (home / "manifest.json").exists()
    assert (home / "passages.jsonl").exists()
    assert (home / "index.json").exists()
    manifest = json.loads((home / "manifest.json").read_text("utf-8"))
    assert manifest["checksum"] == summary["checksum"]


@pytest.mark.parametrize(
    "extra",
    [
        ["--strategy", "chunk"],
        ["--strategy", "chunk", "--chunk-size", "100"],
        ["--strategy", "context"],
        ["--strategy", "sentence", "--max-tokens", "50"],
        ["--strategy", "paragraph", "--stride", "10"],
    ],
)
def test_index_flag_combinations_are_usage_errors(workspace, capsys, extra):
    args = [
        "index",
        "--corpus", str(workspace / "corpus.jsonl"),
        "--snapshot-id", "s",
        "--version-tag", "v",
        "--data-dir", str(workspace / "data"),
    ]
    args = [a for a in args] + extra
    assert cli(args) == 1
    assert "usage error" in capsys.readouterr().err


def test_rank_writes_a_readable_cache(workspace, capsys):
    data_dir = workspace / "data"
    cli(_index_args(workspace, data_dir))
    capsys.readouterr()
    out = workspace / "cache.json"
    code = cli(
        [
            "rank",
            "--questions", str(workspace / "dev.jsonl"),
            "--index", "wiki-en",
            "--top-k", "2",
            "--out", str(out),
            "--data-dir", str(data_dir),
        ]
    )
    assert code == 0
    summary = json.loads(capsys.readouterr().out)
    assert summary["questions"] == 2 and summary["depth"] == 2
    cache = read_cache(out)
    assert set(cache.results) == {"q1", "q2"}
    assert cache.depth == 2
    assert cache_digest(cache) == summary["cache_digest"]
    assert cache.results["q1"].entries[0].passage_id == "doc-fr#0"


def test_run_live_then_cached_agree(workspace, capsys):
    data_dir = workspace / "data"
    cli(_index_args(workspace, data_dir))
    cache = workspace / "cache.json"
    cli(
        [
            "rank",
            "--questions", str(workspace / "dev.jsonl"),
            "--index", "wiki-en",
            "--top-k", "2",
            "--out", str(cache),
            "--data-dir", str(data_dir),
        ]
    )
    capsys.readouterr()

    report_path = workspace / "report.json"
    manifest_path = workspace / "manifest.json"
    code = cli(
        [
            "run",
            "--config", str(workspace / "run.yaml"),
            "--dataset", str(workspace / "dev.jsonl"),
            "--data-dir", str(data_dir),
            "--report", str(report_path),
            "--manifest", str(manifest_path),
        ]
    )
    assert code == 0
    live = json.loads(capsys.readouterr().out)
    assert live["em"] == 1.0
    assert live["n_questions"] == 2
    assert "per_question" not in live

    full = json.loads(report_path.read_text("utf-8"))
    assert [row["question_id"] for row in full["per_question"]] == ["q1", "q2"]
    manifest = json.loads(manifest_path.read_text("utf-8"))
    assert manifest["stage_counters"]["index_queries"] == 2
    assert manifest["report_digest"]

    cached_yaml = workspace / "cached.yaml"
    cached_yaml.write_text(
        CONFIG.replace(
            "ranker:\n  use_cached: false\n  model:\n    name: bm25\n    es_index_name: wiki-en\n",
            f"ranker:\n  use_cached: true\n  cache_path: {cache}\n",
        ),
        "utf-8",
    )
    code = cli(
        [
            "run",
            "--config", str(cached_yaml),
            "--dataset", str(workspace / "dev.jsonl"),
            "--data-dir", str(data_dir),
            "--verbose",
        ]
    )
    assert code == 0
    cached = json.loads(capsys.readouterr().out)
    assert "per_question" in cached
    del cached["per_question"]
    assert cached == live


def test_run_uses_env_data_dir(workspace, capsys, monkeypatch):
    data_dir = workspace / "data"
    monkeypatch.setenv(DATA_DIR_ENV, str(data_dir))
    cli(_index_args(workspace, data_dir)[:-2])  # no --data-dir flag
    capsys.readouterr()
    code = cli(
        [
            "run",
            "--config", str(workspace / "run.yaml"),
            "--dataset", str(workspace / "dev.jsonl"),
        ]
    )
    assert code == 0
    assert json.loads(capsys.readouterr().out)["em"] == 1.0


def test_eval_scores_string_predictions(workspace, capsys):
    predictions = workspace / "preds.json"
    predictions.write_text(json.dumps({"q1": "Paris.", "q2": "munich"}), "utf-8")
    code = cli(
        [
            "eval",
            "--dataset", str(workspace / "dev.jsonl"),
            "--predictions", str(predictions),
        ]
    )
    assert code == 0
    report = json.loads(capsys.readouterr().out)
    assert report["em"] == 0.5
    assert report["mrr"] == 0.0  # no rankings supplied


def test_eval_with_rankings_restores_retrieval_metrics(workspace, capsys):
    data_dir = workspace / "data"
    cli(_index_args(workspace, data_dir))
    cache = workspace / "cache.json"
    cli(
        [
            "rank",
            "--questions", str(workspace / "dev.jsonl"),
            "--index", "wiki-en",
            "--top-k", "2",
            "--out", str(cache),
            "--data-dir", str(data_dir),
        ]
    )
    capsys.readouterr()
    predictions = workspace / "preds.json"
    scored = {
        "q1": [{"answer": "paris", "score": 2.0, "passage_id": "doc-fr#0"}],
        "q2": [{"answer": "berlin", "score": 1.0}, {"answer": "bonn", "score": 0.5}],
    }
    predictions.write_text(json.dumps(scored), "utf-8")
    report_path = workspace / "eval.json"
    code = cli(
        [
            "eval",
            "--dataset", str(workspace / "dev.jsonl"),
            "--predictions", str(predictions),
            "--rankings", str(cache),
            "--report", str(report_path),
        ]
    )
    assert code == 0
    report = json.loads(capsys.readouterr().out)
    assert report["em"] == 1.0
    assert report["recall_at_k"]["1"] == 1.0
    assert report["mrr"] == 1.0
    assert json.loads(report_path.read_text("utf-8"))["per_question"]


def test_eval_missing_question_in_rankings_is_a_runtime_error(workspace, capsys):
    data_dir = workspace / "data"
    cli(_index_args(workspace, data_dir))
    shorter = workspace / "one.jsonl"
    _write_jsonl(shorter, QUESTIONS[:1])
    cache = workspace / "cache.json"
    cli(
        [
            "rank",
            "--questions", str(shorter),
            "--index", "wiki-en",
            "--top-k", "2",
            "--out", str(cache),
            "--data-dir", str(data_dir),
        ]
    )
    capsys.readouterr()
    predictions = workspace / "preds.json"
    predictions.write_text(json.dumps({"q1": "paris", "q2": "berlin"}), "utf-8")
    code = cli(
        [
            "eval",
            "--dataset", str(workspace / "dev.jsonl"),
            "--predictions", str(predictions),
            "--rankings", str(cache),
        ]
    )
    assert code == 2
    assert "q2" in capsys.readouterr().err


def test_exit_codes_for_usage_and_runtime_failures(workspace, capsys):
    assert cli([]) == 1
    assert cli(["frobnicate"]) == 1
    assert cli(["rank", "--questions", "x.jsonl"]) == 1  # missing required flags
    assert (
        cli(
            [
                "index",
                "--corpus", str(workspace / "missing.jsonl"),
                "--snapshot-id", "s",
                "--version-tag", "v",
                "--strategy", "sentence",
                "--data-dir", str(workspace / "data"),
            ]
        )
        == 2
    )
    bad_preds = workspace / "bad.json"
    bad_preds.write_text("[1, 2]", "utf-8")
    assert (
        cli(
            [
                "eval",
                "--dataset", str(workspace / "dev.jsonl"),
                "--predictions", str(bad_preds),
            ]
        )
        == 2
    )
    bad_config = workspace / "bad.yaml"
    bad_config.write_text("data: [", "utf-8")
    assert (
        cli(
            [
                "run",
                "--config", str(bad_config),
                "--dataset", str(workspace / "dev.jsonl"),
            ]
        )
        == 2
    )
    capsys.readouterr()


def test_serve_answers_health_and_rank_over_http(workspace):
    data_dir = workspace / "data"
    assert cli(_index_args(workspace, data_dir)) == 0
    probe = socket.socket()
    probe.bind(("127.0.0.1", 0))
    port = probe.getsockname()[1]
    probe.close()
    proc = subprocess.Popen(
        [
            sys.executable, "-m", "sfqa", "serve",
            "--port", str(port),
            "--data-dir", str(data_dir),
        ],
        stdout=subprocess.DEVNULL,
        stderr=subprocess.DEVNULL,
    )
    base = f"http://127.0.0.1:{port}"
    try:
        deadline = time.monotonic() + 20
        health = None
        while time.monotonic() < deadline:
            try:
                health = requests.get(f"{base}/health", timeout=1)
                break
            except requests.ConnectionError:
                assert proc.poll() is None, "server exited before becoming healthy"
                time.sleep(0.1)
        assert health is not None, "server never came up"
        assert health.json() == {"status": "ok", "indexes": ["wiki-en"]}
        ranked = requests.post(
            f"{base}/v1/rank",
            json={"index": "wiki-en", "query": "capital of france", "top_k": 2},
            timeout=5,
        )
        assert ranked.status_code == 200
        results = ranked.json()["results"]
        assert results[0]["passage_id"] == "doc-fr#0"
    finally:
        proc.terminate()
        proc.wait(timeout=10)

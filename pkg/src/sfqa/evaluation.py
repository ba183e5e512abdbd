"""QA metrics for English and Chinese: EM, token F1, recall@k, oracle EM, MRR.

Answer comparison always goes through normalize_answer, so punctuation,
casing (en), articles (en) and whitespace never affect a score. Retrieval
hits are normalized-substring containment of any gold answer in a passage.
"""

from __future__ import annotations

import json
import math
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

from .analysis import LANGS, answer_tokens, normalize_answer
from .errors import DuplicateQuestionId, MissingRanking
from .fusion import ScoredAnswer
from .ranker import RankedList

DEFAULT_KS = (1, 5, 10)


@dataclass(frozen=True)
class QAExample:
    question_id: str
    question: str
    gold_answers: tuple[str, ...]
    lang: str = "en"

    def __post_init__(self):
        object.__setattr__(self, "gold_answers", tuple(self.gold_answers))
        if not self.question_id:
            raise ValueError("question_id must be nonempty")
        if self.lang not in LANGS:
            raise ValueError(f"unsupported language {self.lang!r}")
        if not self.gold_answers:
            raise ValueError(f"{self.question_id!r} has no gold answers")
        for gold in self.gold_answers:
            if not normalize_answer(gold, self.lang):
                raise ValueError(
                    f"{self.question_id!r} has gold {gold!r} that normalizes to nothing"
                )


def exact_match(prediction: str, golds: Sequence[str], lang: str = "en") -> int:
    """1 if the normalized prediction equals any normalized gold, else 0."""
    normalized = normalize_answer(prediction, lang)
    return int(any(normalized == normalize_answer(gold, lang) for gold in golds))


def f1(prediction: str, golds: Sequence[str], lang: str = "en") -> float:
    """Best token-multiset F1 against any gold (words for en, chars for zh).

    If either side normalizes to nothing, the score is 1 when both do and 0
    otherwise.
    """
    prediction_tokens = answer_tokens(prediction, lang)
    best = 0.0
    for gold in golds:
        gold_tokens = answer_tokens(gold, lang)
        if not prediction_tokens or not gold_tokens:
            score = 1.0 if prediction_tokens == gold_tokens else 0.0
        else:
            overlap = Counter(prediction_tokens) & Counter(gold_tokens)
            matched = sum(overlap.values())
            if matched == 0:
                score = 0.0
            else:
                precision = matched / len(prediction_tokens)
                recall = matched / len(gold_tokens)
                score = 2 * precision * recall / (precision + recall)
        best = max(best, score)
    return best


def first_hit_rank(
    ranked: RankedList, golds: Sequence[str], lang: str = "en"
) -> int | None:
    """1-based rank of the first passage containing any gold answer."""
    normalized_golds = [
        normalized
        for normalized in (normalize_answer(gold, lang) for gold in golds)
        if normalized
    ]
    if not normalized_golds:
        return None
    for position, entry in enumerate(ranked.entries, start=1):
        passage = normalize_answer(entry.text, lang)
        if any(gold in passage for gold in normalized_golds):
            return position
    return None


def recall_at_k(
    ranked: RankedList, golds: Sequence[str], k: int, lang: str = "en"
) -> int:
    """1 if any of the top k passages contains a gold answer, else 0."""
    if k < 1:
        raise ValueError("k must be >= 1")
    hit = first_hit_rank(ranked, golds, lang)
    return int(hit is not None and hit <= k)


def mrr(ranked: RankedList, golds: Sequence[str], lang: str = "en") -> float:
    """Reciprocal rank of the first gold-bearing passage, 0 if none."""
    hit = first_hit_rank(ranked, golds, lang)
    return 0.0 if hit is None else 1.0 / hit


@dataclass(frozen=True)
class QuestionDiagnostics:
    question_id: str
    prediction: str | None
    em: int
    f1: float
    matched_gold: str | None
    first_hit_rank: int | None

    def to_dict(self) -> dict:
        return {
            "question_id": self.question_id,
            "prediction": self.prediction,
            "em": self.em,
            "f1": self.f1,
            "matched_gold": self.matched_gold,
            "first_hit_rank": self.first_hit_rank,
        }


@dataclass(frozen=True)
class MetricsReport:
    em: float
    f1: float
    recall_at_k: dict[int, float]
    oracle_em_at_k: dict[int, float]
    mrr: float
    n_questions: int
    per_question: tuple[QuestionDiagnostics, ...] = field(default=())

    def to_dict(self, verbose: bool = False) -> dict:
        out = {
            "em": self.em,
            "f1": self.f1,
            "recall_at_k": {str(k): v for k, v in sorted(self.recall_at_k.items())},
            "oracle_em_at_k": {
                str(k): v for k, v in sorted(self.oracle_em_at_k.items())
            },
            "mrr": self.mrr,
            "n_questions": self.n_questions,
        }
        if verbose:
            out["per_question"] = [diag.to_dict() for diag in self.per_question]
        return out


def _best_gold(prediction: str, golds: Sequence[str], lang: str) -> str | None:
    """Gold the prediction matched: exact if possible, else the F1 argmax."""
    normalized = normalize_answer(prediction, lang)
    for gold in golds:
        if normalized == normalize_answer(gold, lang):
            return gold
    scored = [(f1(prediction, [gold], lang), gold) for gold in golds]
    top_score, top_gold = max(scored, key=lambda pair: pair[0])
    return top_gold if top_score > 0 else None


def evaluate(
    examples: Sequence[QAExample],
    rankings: Mapping[str, RankedList],
    predictions: Mapping[str, Sequence[ScoredAnswer]],
    ks: Sequence[int] = DEFAULT_KS,
) -> MetricsReport:
    """Aggregate metrics over a batch.

    Every example needs a ranked list; a missing or empty prediction list
    scores 0 on EM and F1. The top-1 fused answer is the prediction. Results
    are reduced in question-id order so the report is order-independent.
    """
    if not ks or any(k < 1 for k in ks):
        raise ValueError(f"bad ks {ks!r}")
    seen: set[str] = set()
    for example in examples:
        if example.question_id in seen:
            raise DuplicateQuestionId(f"question id {example.question_id!r} appears twice")
        seen.add(example.question_id)
    for example in examples:
        if example.question_id not in rankings:
            raise MissingRanking(
                f"no ranked list for question {example.question_id!r}",
                question_id=example.question_id,
            )

    ks = tuple(sorted(set(ks)))
    diagnostics = []
    em_values = []
    f1_values = []
    rr_values = []
    hits = {k: [] for k in ks}
    for example in sorted(examples, key=lambda ex: ex.question_id):
        ranked = rankings[example.question_id]
        fused = predictions.get(example.question_id) or ()
        prediction = fused[0].answer_text if fused else None
        if prediction is None:
            em_value, f1_value, matched = 0, 0.0, None
        else:
            em_value = exact_match(prediction, example.gold_answers, example.lang)
            f1_value = f1(prediction, example.gold_answers, example.lang)
            matched = _best_gold(prediction, example.gold_answers, example.lang)
        hit = first_hit_rank(ranked, example.gold_answers, example.lang)
        em_values.append(em_value)
        f1_values.append(f1_value)
        rr_values.append(0.0 if hit is None else 1.0 / hit)
        for k in ks:
            hits[k].append(int(hit is not None and hit <= k))
        diagnostics.append(
            QuestionDiagnostics(
                question_id=example.question_id,
                prediction=prediction,
                em=em_value,
                f1=f1_value,
                matched_gold=matched,
                first_hit_rank=hit,
            )
        )
    n = len(examples)

    def mean(values):
        return math.fsum(values) / n if n else 0.0

    recall = {k: mean(hits[k]) for k in ks}
    return MetricsReport(
        em=mean(em_values),
        f1=mean(f1_values),
        recall_at_k=recall,
        oracle_em_at_k=dict(recall),
        mrr=mean(rr_values),
        n_questions=n,
        per_question=tuple(diagnostics),
    )


def load_dataset(path: str | Path) -> list[QAExample]:
    """Read a jsonl dataset with id/question/answers/lang fields."""
    examples = []
    with Path(path).open(encoding="utf-8") as handle:
        for line in handle:
            if not line.strip():
                continue
            record = json.loads(line)
            examples.append(
                QAExample(
                    question_id=record["id"],
                    question=record["question"],
                    gold_answers=tuple(record["answers"]),
                    lang=record.get("lang", "en"),
                )
            )
    return examples

"""Score normalization and linear fusion of ranker and reader scores.

A candidate's final score is y = (1 - alpha) * y_reader + alpha * y_rank,
where both inputs may first be normalized per question. Fused candidates are
then deduplicated by normalized answer string and cut to final_k.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Sequence

from .analysis import normalize_answer
from .errors import UnknownPassageInCandidates
from .ranker import RankedList
from .reader import SpanCandidate


class NormKind(str, enum.Enum):
    NONE = "none"
    ZNORM = "znorm"
    FLOOR = "floor"


class ReaderScoreType(str, enum.Enum):
    LOGIT = "logit"
    PROBABILITY = "probability"


@dataclass(frozen=True)
class FusionParams:
    alpha: float
    reader_score_type: ReaderScoreType = ReaderScoreType.PROBABILITY
    norm_rank: NormKind = NormKind.FLOOR
    norm_reader: NormKind = NormKind.NONE
    final_k: int = 5

    def __post_init__(self):
        object.__setattr__(self, "reader_score_type", ReaderScoreType(self.reader_score_type))
        object.__setattr__(self, "norm_rank", NormKind(self.norm_rank))
        object.__setattr__(self, "norm_reader", NormKind(self.norm_reader))
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError(f"alpha {self.alpha} outside [0, 1]")
        if self.final_k < 1:
            raise ValueError("final_k must be >= 1")


@dataclass(frozen=True)
class ScoredAnswer:
    """A fused answer; y_reader and y_rank are the normalized inputs to y."""

    question_id: str
    answer_text: str
    y: float
    y_reader: float
    y_rank: float
    passage_id: str
    rank_in_list: int


def normalize(scores: Sequence[float], kind: NormKind) -> list[float]:
    """Normalize a nonempty score list.

    znorm uses population standard deviation, computed on scaled deviations
    n*x - sum(x) so that no intermediate mean is rounded; a zero-variance
    list maps to all zeros. floor subtracts the minimum.
    """
    if not scores:
        raise ValueError("cannot normalize an empty score list")
    kind = NormKind(kind)
    if kind is NormKind.NONE:
        return list(scores)
    if kind is NormKind.FLOOR:
        floor = min(scores)
        return [x - floor for x in scores]
    n = len(scores)
    total = math.fsum(scores)
    deviations = [n * x - total for x in scores]
    spread_sq = math.fsum(d * d for d in deviations)
    if spread_sq == 0.0:
        return [0.0] * n
    scale = math.sqrt(spread_sq / n)
    return [d / scale for d in deviations]


def fuse(
    candidates: Sequence[SpanCandidate],
    ranks: RankedList,
    params: FusionParams,
    lang: str = "en",
) -> list[ScoredAnswer]:
    """Fuse one question's reader candidates with its ranked list.

    Reader scores are normalized over the whole candidate set, rank scores
    over the ranked list's entries. The result is deduplicated by normalized
    answer and truncated to final_k.
    """
    if not candidates:
        return []
    rank_norm = normalize([entry.score for entry in ranks.entries], params.norm_rank)
    rank_score = {
        entry.passage_id: value for entry, value in zip(ranks.entries, rank_norm)
    }
    rank_position = {
        entry.passage_id: position
        for position, entry in enumerate(ranks.entries, start=1)
    }
    for candidate in candidates:
        if candidate.passage_id not in rank_score:
            raise UnknownPassageInCandidates(
                f"candidate points at passage {candidate.passage_id!r} "
                f"missing from the ranked list",
                passage_id=candidate.passage_id,
            )
    if params.reader_score_type is ReaderScoreType.LOGIT:
        raw_reader = [candidate.logit for candidate in candidates]
    else:
        raw_reader = [candidate.probability for candidate in candidates]
    reader_norm = normalize(raw_reader, params.norm_reader)
    alpha = params.alpha
    fused = []
    for candidate, y_reader in zip(candidates, reader_norm):
        y_rank = rank_score[candidate.passage_id]
        fused.append(
            ScoredAnswer(
                question_id=candidate.question_id,
                answer_text=candidate.answer_text,
                y=(1.0 - alpha) * y_reader + alpha * y_rank,
                y_reader=y_reader,
                y_rank=y_rank,
                passage_id=candidate.passage_id,
                rank_in_list=rank_position[candidate.passage_id],
            )
        )
    return aggregate(fused, lang)[: params.final_k]


def aggregate(fused: Sequence[ScoredAnswer], lang: str = "en") -> list[ScoredAnswer]:
    """Deduplicate by normalized answer, keeping each group's best instance.

    Best means highest y; exact y ties fall back to (passage_id, answer_text)
    so the survivor never depends on input order. Output is sorted by y
    descending with the same tie-break, which makes aggregate idempotent.
    """
    best: dict[str, ScoredAnswer] = {}
    for answer in fused:
        key = normalize_answer(answer.answer_text, lang)
        holder = best.get(key)
        if holder is None:
            best[key] = answer
            continue
        if answer.y > holder.y or (
            answer.y == holder.y
            and (answer.passage_id, answer.answer_text)
            < (holder.passage_id, holder.answer_text)
        ):
            best[key] = answer
    return sorted(best.values(), key=lambda a: (-a.y, a.passage_id, a.answer_text))

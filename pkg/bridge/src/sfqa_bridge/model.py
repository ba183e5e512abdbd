"""Extractive span prediction with a hub-compatible transformer checkpoint.

Question/passage pairs are encoded together; passages longer than the model's
window are split into overlapping windows and candidates de-duplicated by
character span, keeping the best logit. Character offsets come straight from
the tokenizer's offset mapping, so every candidate slices the passage text
exactly as received. Stock extractive models normalize start/end scores per
window, so globally_normalized is False.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import torch
from transformers import AutoModelForQuestionAnswering, AutoTokenizer

# Longest candidate span, in model tokens.
MAX_ANSWER_TOKENS = 30
# Start/end positions considered per window.
TOP_POSITIONS = 20


@dataclass(frozen=True)
class BridgeConfig:
    """Server settings. model_id is a hub id or a local checkpoint directory."""

    model_id: str
    port: int = 8123
    max_batch: int = 8
    device: str = "cpu"

    def __post_init__(self):
        if not self.model_id:
            raise ValueError("model_id must be nonempty")
        if not 0 < self.port < 65536:
            raise ValueError(f"port {self.port} out of range")
        if self.max_batch < 1:
            raise ValueError("max_batch must be >= 1")


def _softmax(logits: Sequence[float]) -> list[float]:
    top = max(logits)
    exps = [math.exp(x - top) for x in logits]
    total = math.fsum(exps)
    return [e / total for e in exps]


class ExtractiveReader:
    """One loaded model plus its tokenizer; read() is the inference surface."""

    globally_normalized = False

    def __init__(self, config: BridgeConfig):
        self.config = config
        self.tokenizer = AutoTokenizer.from_pretrained(config.model_id)
        self.model = AutoModelForQuestionAnswering.from_pretrained(config.model_id)
        self.model.to(config.device)
        self.model.eval()
        positions = int(getattr(self.model.config, "max_position_embeddings", 512))
        self.max_length = min(384, positions)
        self.stride = self.max_length // 3

    def read(
        self, question: str, passages: Sequence[tuple[str, str]], max_answers: int
    ) -> list[dict]:
        """Extract up to max_answers spans per passage, as wire-shape dicts."""
        encoding = self.tokenizer(
            [question] * len(passages),
            [text for _, text in passages],
            truncation="only_second",
            max_length=self.max_length,
            stride=self.stride,
            return_overflowing_tokens=True,
            return_offsets_mapping=True,
            padding=True,
            return_tensors="pt",
        )
        sample_of_window = encoding.pop("overflow_to_sample_mapping").tolist()
        offsets = encoding.pop("offset_mapping").tolist()
        n_windows = len(sample_of_window)
        sequence_ids = [encoding.sequence_ids(w) for w in range(n_windows)]
        features = {k: v.to(self.config.device) for k, v in encoding.items()}

        start_chunks = []
        end_chunks = []
        with torch.no_grad():
            for lo in range(0, n_windows, self.config.max_batch):
                chunk = {k: v[lo : lo + self.config.max_batch] for k, v in features.items()}
                out = self.model(**chunk)
                start_chunks.append(out.start_logits.cpu())
                end_chunks.append(out.end_logits.cpu())
        start_logits = torch.cat(start_chunks).tolist()
        end_logits = torch.cat(end_chunks).tolist()

        # Best logit per character span, per passage.
        best: list[dict[tuple[int, int], float]] = [{} for _ in passages]
        for w in range(n_windows):
            spans = best[sample_of_window[w]]
            starts = start_logits[w]
            ends = end_logits[w]
            context = [i for i, sid in enumerate(sequence_ids[w]) if sid == 1]
            top_starts = sorted(context, key=lambda i: -starts[i])[:TOP_POSITIONS]
            top_ends = sorted(context, key=lambda i: -ends[i])[:TOP_POSITIONS]
            for si in top_starts:
                for ei in top_ends:
                    if ei < si or ei - si + 1 > MAX_ANSWER_TOKENS:
                        continue
                    span = (offsets[w][si][0], offsets[w][ei][1])
                    if span[1] <= span[0]:
                        continue
                    logit = starts[si] + ends[ei]
                    if logit > spans.get(span, -math.inf):
                        spans[span] = logit

        candidates: list[dict] = []
        for (passage_id, text), spans in zip(passages, best):
            kept = sorted(spans.items(), key=lambda item: (-item[1], item[0]))[:max_answers]
            if not kept:
                continue
            probs = _softmax([logit for _, logit in kept])
            for ((start, end), logit), prob in zip(kept, probs):
                candidates.append(
                    {
                        "passage_id": passage_id,
                        "text": text[start:end],
                        "start": start,
                        "end": end,
                        "logit": logit,
                        "prob": prob,
                    }
                )
        return candidates

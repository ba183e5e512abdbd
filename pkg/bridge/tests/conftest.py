"""Shared fixtures: a tiny extractive QA model trained once per session.

The public model hub is unreachable in this sandbox, so the suite builds a
word-level BERT from scratch and trains it briefly on templated
question/passage pairs (about a second on CPU, fully seeded). Tests that need
a served model share one TestClient over the saved checkpoint.
"""

from __future__ import annotations

import itertools
import random
import time
from dataclasses import dataclass

import pytest
import torch
from fastapi.testclient import TestClient
from tokenizers import Tokenizer
from tokenizers.models import WordLevel
from tokenizers.pre_tokenizers import Whitespace
from tokenizers.processors import TemplateProcessing
from transformers import BertConfig, BertForQuestionAnswering, PreTrainedTokenizerFast
from transformers.utils import logging as hf_logging

from sfqa_bridge import BridgeConfig, create_app

hf_logging.disable_progress_bar()

ADJS = ["ancient", "bright", "carved", "dusty", "gilded", "hollow", "iron", "jade", "quiet", "woven"]
NOUNS = ["amulet", "banner", "chalice", "drum", "emblem", "flute", "goblet", "lantern", "mirror", "scroll"]
PLACES = ["archive", "cellar", "chapel", "garret", "keep", "library", "tower", "vault"]
CITIES = ["aleppo", "bergen", "cusco", "dakar", "esfahan", "fargo", "goa", "hobart"]

N_TRAIN = 250
N_DEV = 50


@dataclass(frozen=True)
class QAPair:
    """One templated question/passage pair; char_span locates the answer."""

    question: str
    passage: str
    answer: str
    char_span: tuple[int, int]


def _make_pair(serial: int, adj: str, noun: str, place: str, city: str) -> QAPair:
    name = f"zq{serial:03d}relic"
    passage = f"the {adj} {noun} named {name} was kept inside the {place} of {city} ."
    question = f"what was the {adj} {noun} kept inside the {place} called ?"
    start = passage.index(name)
    return QAPair(question, passage, name, (start, start + len(name)))


def _make_pairs() -> list[QAPair]:
    combos = list(itertools.product(ADJS, NOUNS, PLACES))
    rng = random.Random(7)
    rng.shuffle(combos)
    return [
        _make_pair(i, adj, noun, place, CITIES[i % len(CITIES)])
        for i, (adj, noun, place) in enumerate(combos[: N_TRAIN + N_DEV])
    ]


def _build_tokenizer(pairs: list[QAPair]) -> tuple[PreTrainedTokenizerFast, int]:
    words = sorted({w for p in pairs for w in f"{p.question} {p.passage}".split()})
    vocab = {"[PAD]": 0, "[UNK]": 1, "[CLS]": 2, "[SEP]": 3}
    for word in words:
        vocab[word] = len(vocab)
    core = Tokenizer(WordLevel(vocab, unk_token="[UNK]"))
    core.pre_tokenizer = Whitespace()
    core.post_processor = TemplateProcessing(
        single="[CLS] $A [SEP]",
        pair="[CLS] $A [SEP] $B:1 [SEP]:1",
        special_tokens=[("[CLS]", 2), ("[SEP]", 3)],
    )
    tokenizer = PreTrainedTokenizerFast(
        tokenizer_object=core,
        unk_token="[UNK]",
        pad_token="[PAD]",
        cls_token="[CLS]",
        sep_token="[SEP]",
        model_input_names=["input_ids", "token_type_ids", "attention_mask"],
    )
    return tokenizer, len(vocab)


def _span_positions(encoding, row: int, char_span: tuple[int, int]) -> tuple[int, int]:
    sequence = encoding.sequence_ids(row)
    offsets = encoding["offset_mapping"][row].tolist()
    start_tok = end_tok = 0
    for t, (sid, (a, b)) in enumerate(zip(sequence, offsets)):
        if sid != 1:
            continue
        if a == char_span[0]:
            start_tok = t
        if b == char_span[1]:
            end_tok = t
    return start_tok, end_tok


def _train_model(tokenizer, vocab_size: int, pairs: list[QAPair]) -> BertForQuestionAnswering:
    torch.manual_seed(0)
    model = BertForQuestionAnswering(
        BertConfig(
            vocab_size=vocab_size,
            hidden_size=32,
            num_hidden_layers=2,
            num_attention_heads=2,
            intermediate_size=64,
            max_position_embeddings=192,
        )
    )
    model.train()
    optimizer = torch.optim.Adam(model.parameters(), lr=5e-3)
    rng = random.Random(0)
    for _ in range(60):
        sample = rng.sample(pairs, 48)
        encoding = tokenizer(
            [p.question for p in sample],
            [p.passage for p in sample],
            padding=True,
            return_offsets_mapping=True,
            return_tensors="pt",
        )
        positions = [_span_positions(encoding, i, p.char_span) for i, p in enumerate(sample)]
        features = {k: v for k, v in encoding.items() if k != "offset_mapping"}
        loss = model(
            **features,
            start_positions=torch.tensor([s for s, _ in positions]),
            end_positions=torch.tensor([e for _, e in positions]),
        ).loss
        optimizer.zero_grad()
        loss.backward()
        optimizer.step()
    model.eval()
    return model


@pytest.fixture(scope="session")
def qa_pairs():
    pairs = _make_pairs()
    return {"train": pairs[:N_TRAIN], "dev": pairs[N_TRAIN:]}


@pytest.fixture(scope="session")
def model_dir(tmp_path_factory, qa_pairs):
    tokenizer, vocab_size = _build_tokenizer(qa_pairs["train"] + qa_pairs["dev"])
    model = _train_model(tokenizer, vocab_size, qa_pairs["train"])
    target = tmp_path_factory.mktemp("tiny-extractive-model")
    tokenizer.save_pretrained(str(target))
    model.save_pretrained(str(target))
    return target


@pytest.fixture(scope="session")
def bridge_client(model_dir):
    config = BridgeConfig(model_id=str(model_dir), max_batch=4)
    with TestClient(create_app(config), raise_server_exceptions=False) as client:
        deadline = time.monotonic() + 60
        while client.get("/health").json()["status"] != "ok":
            assert time.monotonic() < deadline, "model never finished loading"
            time.sleep(0.05)
        yield client

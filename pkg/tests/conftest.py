"""Shared builders for model-level tests: a tiny vocab, config, and sets."""

import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from crossrank.data import Candidate, CandidateSet
from crossrank.model import ModelConfig, init_params
from crossrank.text import Vocab

WORDS = ("alpha bravo charlie delta echo foxtrot golf hotel india juliet "
         "kilo lima mike november oscar papa quebec romeo sierra tango "
         "uniform victor whiskey xray yankee zulu").split()


def make_vocab():
    return Vocab.build([" ".join(WORDS)], max_size=256)


def make_config(vocab, L=2, l=2, c=16, heads=2, seq=24, ffn=32):
    return ModelConfig(L=L, l=l, c=c, heads_local=heads, heads_global=heads,
                       ffn_size=ffn, vocab_size=len(vocab), max_seq_len=seq)


def make_set(n=3, seed=0, query="alpha bravo", qid="q0"):
    rng = np.random.default_rng(seed)
    candidates = []
    for i in range(n):
        words = rng.choice(WORDS, size=4, replace=True)
        candidates.append(Candidate(
            doc_id=f"d{i}",
            title=str(rng.choice(WORDS)),
            passage=" ".join(words),
            retrieval_score=float(rng.uniform(0, 10)),
            first_stage_rank=i + 1,
        ))
    return CandidateSet(qid, query, candidates)


@pytest.fixture
def tiny():
    vocab = make_vocab()
    config = make_config(vocab)
    params = init_params(config, seed=0)
    return vocab, config, params

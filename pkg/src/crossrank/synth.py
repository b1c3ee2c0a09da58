"""Deterministic synthetic ranking tasks for desk-scale verification.

Two task families:

``pointwise``
    Each query asks for a topic word; exactly one candidate contains it.
    Solvable by a bag-of-words rule in isolation.  ``distractor_strength``
    optionally plants a hard negative that also contains the topic word, in
    which case the first-stage score (drawn higher for the true answer)
    carries the disambiguating signal.

``comparative``
    Every candidate reports a magnitude word from an ordered scale.  Within
    a set, n-2 candidates agree on one value (the bulk) and two dissenting
    candidates share a different one; the dissenting pair is relevant
    (label 1).  The dissenting value leans toward the top of the scale (the
    ``skew`` knob), so an isolated scorer gets partial signal from the word
    alone, but telling bulk from dissent requires seeing the other
    candidates.  First-stage scores are independent noise.  The exact
    expected MRR@10 of the best isolated scorer is computable by exhaustive
    enumeration of (dissent value, bulk value) outcomes
    (``pointwise_oracle_ceiling``), and a set-aware rule
    (``set_oracle_run``) scores a perfect 1.0.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .data import (QrelRecord, RunRecord, write_corpus, write_qrels,
                   write_queries, write_run)

SCALE_WORDS = (
    "atom dot mote speck fleck grain pebble shard minnow pocket modest "
    "middling fair ample broad large grand hefty huge giant jumbo mammoth "
    "colossal titanic immense vast cosmic galactic boundless endless"
).split()

TASKS = ("pointwise", "comparative")


class SynthSpecError(ValueError):
    """Raised when a generation spec is internally inconsistent."""


@dataclass
class SynthSpec:
    num_queries: int = 100
    n: int = 8  # candidates per query
    seed: int = 0
    task: str = "pointwise"
    vocab_pool: int = 48  # filler/topic word pool size
    distractor_strength: float = 0.0  # pointwise: P(hard negative per query)
    scale_len: int = 16  # comparative: magnitude scale length
    skew: float = 4.0  # comparative: how strongly the twin value leans high

    def __post_init__(self):
        if self.task not in TASKS:
            raise SynthSpecError(f"task must be one of {TASKS}")
        if self.n < 1:
            raise SynthSpecError("n must be >= 1")
        if self.task == "comparative":
            if self.n < 5:
                raise SynthSpecError(
                    "comparative task needs n >= 5 (a 2-doc dissent against a bulk)")
            if self.scale_len > len(SCALE_WORDS):
                raise SynthSpecError(
                    f"scale_len {self.scale_len} exceeds the {len(SCALE_WORDS)}-word scale")
            if self.n > self.scale_len:
                raise SynthSpecError(
                    f"n={self.n} exceeds scale length {self.scale_len}")
        if not 0.0 <= self.distractor_strength <= 1.0:
            raise SynthSpecError("distractor_strength must be in [0, 1]")


@dataclass
class SynthData:
    corpus: dict
    queries: dict
    qrels: list
    run: list


_SYLLABLES = ("ba be bi bo bu da de di do du ka ke ki ko ku la le li lo lu "
              "ma me mi mo mu na ne ni no nu ra re ri ro ru sa se si so su "
              "ta te ti to tu va ve vi vo vu").split()


def _pool_words(count, rng):
    """Deterministic pronounceable nonsense words, disjoint from the scale."""
    words = []
    taken = set(SCALE_WORDS)
    while len(words) < count:
        w = "".join(rng.choice(_SYLLABLES) for _ in range(3))
        if w not in taken:
            taken.add(w)
            words.append(w)
    return words


def dissent_weights(scale_len, skew):
    """Distribution of the dissenting value over scale positions 0..S-1."""
    raw = np.exp(skew * np.linspace(0.0, 1.0, scale_len))
    return raw / raw.sum()


def generate(spec):
    """Build a full corpus/queries/qrels/run bundle; byte-stable per seed."""
    rng = np.random.default_rng(spec.seed)
    pool = _pool_words(spec.vocab_pool, rng)
    corpus, queries, qrels, run = {}, {}, [], []
    scale = SCALE_WORDS[: spec.scale_len]
    weights = dissent_weights(spec.scale_len, spec.skew)
    for qi in range(spec.num_queries):
        qid = f"q{qi:04d}"
        if spec.task == "pointwise":
            docs, qtext, labels, scores = _pointwise_query(spec, rng, pool)
        else:
            docs, qtext, labels, scores = _comparative_query(spec, rng, pool,
                                                             scale, weights)
        queries[qid] = qtext
        doc_ids = []
        for i, (title, passage) in enumerate(docs):
            doc_id = f"{qid}-d{i}"
            corpus[doc_id] = (title, passage)
            doc_ids.append(doc_id)
        for doc_id, label in zip(doc_ids, labels):
            qrels.append(QrelRecord(qid, doc_id, int(label)))
        order = sorted(range(len(doc_ids)), key=lambda i: (-scores[i], doc_ids[i]))
        run += [RunRecord(qid, doc_ids[i], rank, float(scores[i]), "synth")
                for rank, i in enumerate(order, 1)]
    return SynthData(corpus, queries, qrels, run)


def _pointwise_query(spec, rng, pool):
    answer = pool[int(rng.integers(len(pool)))]
    safe = [w for w in pool if w != answer]  # fillers must not leak the answer
    qtext = f"find the report about {answer}"
    relevant_pos = int(rng.integers(spec.n))
    hard_pos = None
    if spec.n > 1 and rng.random() < spec.distractor_strength:
        hard_pos = int((relevant_pos + 1 + rng.integers(spec.n - 1)) % spec.n)
    docs, labels, scores = [], [], []
    for i in range(spec.n):
        filler = safe[int(rng.integers(len(safe)))]
        other = safe[int(rng.integers(len(safe)))]
        title = f"note {filler}"
        if i == relevant_pos:
            passage = f"{answer} report covering {filler} in detail"
            score = rng.uniform(0.45, 1.0)
            label = 1
        elif i == hard_pos:
            passage = f"{answer} aside mentioned next to {other}"
            score = rng.uniform(0.35, 0.85)
            label = 0
        else:
            passage = f"{other} report covering {filler} in detail"
            score = rng.uniform(0.0, 0.7)
            label = 0
        docs.append((title, passage))
        labels.append(label)
        scores.append(score)
    return docs, qtext, labels, scores


def _comparative_query(spec, rng, pool, scale, weights):
    dissent_value = int(rng.choice(spec.scale_len, p=weights))
    others = [v for v in range(spec.scale_len) if v != dissent_value]
    bulk_value = others[int(rng.integers(len(others)))]
    values = [dissent_value, dissent_value] + [bulk_value] * (spec.n - 2)
    perm = rng.permutation(spec.n)
    qtext = "which reports dissent from the bulk"
    docs, labels, scores = [], [], []
    for i in range(spec.n):
        v = values[int(perm[i])]
        title = "survey notes"  # constant: nothing to memorize per doc
        # short, word-heavy passage: the scale word must dominate the
        # candidate's [cls] mixture for the set comparison to be learnable
        passage = f"reading {scale[v]} {scale[v]}"
        docs.append((title, passage))
        labels.append(1 if v == dissent_value else 0)
        scores.append(rng.uniform(0.0, 1.0))  # independent of the labels
    return docs, qtext, labels, scores


def write_dataset(data, out_dir):
    """Write the four standard files into ``out_dir``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_corpus(out / "corpus.tsv", data.corpus)
    write_queries(out / "queries.tsv", data.queries)
    write_qrels(out / "qrels.txt", data.qrels)
    write_run(out / "run.txt", data.run)
    return out


# --- oracles ---------------------------------------------------------------

def passage_scale_value(passage, scale):
    """Scale position of the single magnitude word in a passage."""
    words = passage.split()
    hits = [i for i, w in enumerate(scale) if w in words]
    if len(hits) != 1:
        raise ValueError(f"expected exactly one scale word in {passage!r}")
    return hits[0]


def set_oracle_run(data, spec, tag="set-oracle"):
    """Set-aware rule for the comparative task: the dissenting pair first."""
    scale = SCALE_WORDS[: spec.scale_len]
    by_query = {}
    for r in data.run:
        by_query.setdefault(r.query_id, []).append(r.doc_id)
    records = []
    for qid, doc_ids in by_query.items():
        values = {d: passage_scale_value(data.corpus[d][1], scale) for d in doc_ids}
        counts = {}
        for v in values.values():
            counts[v] = counts.get(v, 0) + 1
        scored = sorted(doc_ids, key=lambda d: (counts[values[d]], d))
        records += [RunRecord(qid, d, rank, float(len(scored) - rank + 1), tag)
                    for rank, d in enumerate(scored, 1)]
    return records


def bow_oracle_run(data, tag="bow-oracle"):
    """Bag-of-words rule for the pointwise task: answer-token presence."""
    by_query = {}
    for r in data.run:
        by_query.setdefault(r.query_id, []).append(r.doc_id)
    records = []
    for qid, doc_ids in by_query.items():
        answer = data.queries[qid].split()[-1]
        scored = sorted(doc_ids,
                        key=lambda d: (-(answer in data.corpus[d][1].split()), d))
        records += [RunRecord(qid, d, rank, float(len(scored) - rank + 1), tag)
                    for rank, d in enumerate(scored, 1)]
    return records


def posterior_order(spec):
    """Ranking order over scale positions for the best isolated scorer.

    The duplicated value leans high on the scale while singles are uniform,
    so the posterior P(relevant | word) is strictly increasing in the twin
    weight; ranking by scale position descending is posterior-optimal.
    """
    return list(range(spec.scale_len - 1, -1, -1))


def pointwise_oracle_ceiling(spec, at_k=10):
    """Exact expected MRR@k of the Bayes isolated scorer on comparative data.

    From one candidate alone the best signal is P(relevant | word), which is
    strictly increasing in the dissent weight, so the Bayes scorer ranks by
    scale position.  Its reciprocal rank is 1 when the dissent value sits
    above the bulk value and 1/(n-1) otherwise; the expectation sums
    exhaustively over every (dissent, bulk) outcome of the generator.
    """
    if spec.task != "comparative":
        raise SynthSpecError("the oracle ceiling is defined for the comparative task")
    weights = dissent_weights(spec.scale_len, spec.skew)
    low_rank = spec.n - 1
    low_rr = 1.0 / low_rank if low_rank <= at_k else 0.0
    total = 0.0
    for dissent in range(spec.scale_len):
        for bulk in range(spec.scale_len):
            if bulk == dissent:
                continue
            rr = 1.0 if dissent > bulk else low_rr
            total += weights[dissent] * rr / (spec.scale_len - 1)
    return total


def pointwise_oracle_ceiling_bruteforce(spec, at_k=10):
    """Same quantity by enumerating generated sets doc-by-doc.

    Walks every (dissent value, bulk value) pair, builds the value multiset,
    ranks it with the posterior order, and reads off the first relevant
    rank.  Independent of the closed counting above; kept as its check.
    """
    if spec.task != "comparative":
        raise SynthSpecError("the oracle ceiling is defined for the comparative task")
    weights = dissent_weights(spec.scale_len, spec.skew)
    order_rank = {v: r for r, v in enumerate(posterior_order(spec))}
    total = 0.0
    for dissent in range(spec.scale_len):
        for bulk in range(spec.scale_len):
            if bulk == dissent:
                continue
            values = [dissent, dissent] + [bulk] * (spec.n - 2)
            ranked = sorted(values, key=lambda v: order_rank[v])
            first = ranked.index(dissent) + 1
            rr = 1.0 / first if first <= at_k else 0.0
            total += weights[dissent] * rr / (spec.scale_len - 1)
    return total

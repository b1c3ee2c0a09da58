"""Synthetic task generator: determinism, label structure, oracle properties."""

import numpy as np
import pytest

from crossrank import synth
from crossrank.metrics import mrr_at_k
from crossrank.synth import SynthSpec, generate, pointwise_oracle_ceiling


def read_all(out_dir):
    return {p.name: p.read_bytes() for p in sorted(out_dir.iterdir())}


def test_same_seed_byte_identical(tmp_path):
    spec = SynthSpec(num_queries=12, n=5, seed=7, task="comparative")
    a = synth.write_dataset(generate(spec), tmp_path / "a")
    b = synth.write_dataset(generate(spec), tmp_path / "b")
    assert read_all(a) == read_all(b)
    c = synth.write_dataset(generate(SynthSpec(num_queries=12, n=5, seed=8,
                                               task="comparative")), tmp_path / "c")
    assert read_all(a) != read_all(c)


def test_comparative_has_exactly_two_label_one_per_query():
    data = generate(SynthSpec(num_queries=30, n=8, seed=1, task="comparative"))
    per_query = {}
    for q in data.qrels:
        per_query.setdefault(q.query_id, []).append(q.grade)
    assert len(per_query) == 30
    for qid, grades in per_query.items():
        assert sorted(grades, reverse=True)[:3] == [1, 1, 0]
        assert sum(grades) == 2


def test_comparative_twins_share_scale_word():
    spec = SynthSpec(num_queries=20, n=6, seed=2, task="comparative")
    data = generate(spec)
    scale = synth.SCALE_WORDS[: spec.scale_len]
    rel = {}
    for q in data.qrels:
        if q.grade == 1:
            rel.setdefault(q.query_id, []).append(q.doc_id)
    for qid, docs in rel.items():
        values = [synth.passage_scale_value(data.corpus[d][1], scale) for d in docs]
        assert values[0] == values[1]


def test_comparative_requires_room_on_the_scale():
    with pytest.raises(synth.SynthSpecError):
        SynthSpec(num_queries=1, n=17, scale_len=16, task="comparative")
    with pytest.raises(synth.SynthSpecError):
        SynthSpec(num_queries=1, n=8, scale_len=99, task="comparative")
    with pytest.raises(synth.SynthSpecError):
        SynthSpec(num_queries=1, n=4, task="comparative")  # no 2-vs-bulk split


def test_pointwise_single_relevant_contains_answer():
    spec = SynthSpec(num_queries=25, n=6, seed=3, task="pointwise")
    data = generate(spec)
    for qid, qtext in data.queries.items():
        answer = qtext.split()[-1]
        rel = [q.doc_id for q in data.qrels if q.query_id == qid and q.grade == 1]
        assert len(rel) == 1
        assert answer in data.corpus[rel[0]][1].split()
        others = [q.doc_id for q in data.qrels if q.query_id == qid and q.grade == 0]
        for d in others:  # no hard negatives at distractor_strength=0
            assert answer not in data.corpus[d][1].split()


def test_pointwise_bow_rule_is_perfect_at_zero_distractor():
    data = generate(SynthSpec(num_queries=40, n=8, seed=4, task="pointwise"))
    run = synth.bow_oracle_run(data)
    assert mrr_at_k(run, data.qrels, k=10).mean == 1.0


def test_pointwise_distractor_strength_plants_hard_negatives():
    spec = SynthSpec(num_queries=60, n=8, seed=5, task="pointwise",
                     distractor_strength=1.0)
    data = generate(spec)
    planted = 0
    for qid, qtext in data.queries.items():
        answer = qtext.split()[-1]
        with_answer = [d for d in data.corpus
                       if d.startswith(qid) and answer in data.corpus[d][1].split()]
        planted += len(with_answer) == 2
    assert planted == 60
    run = synth.bow_oracle_run(data)
    assert mrr_at_k(run, data.qrels, k=10).mean < 1.0


def test_set_aware_oracle_perfect_on_comparative():
    spec = SynthSpec(num_queries=50, n=8, seed=6, task="comparative")
    data = generate(spec)
    run = synth.set_oracle_run(data, spec)
    assert mrr_at_k(run, data.qrels, k=10).mean == 1.0


def test_first_stage_scores_uninformative_on_comparative():
    spec = SynthSpec(num_queries=300, n=8, seed=7, task="comparative")
    data = generate(spec)
    first_stage_mrr = mrr_at_k(data.run, data.qrels, k=10).mean
    ceiling = pointwise_oracle_ceiling(spec)
    # random placement of 2 relevants in 8 gives ~0.49 in expectation
    assert first_stage_mrr < 0.65
    assert first_stage_mrr < 1.0 and ceiling < 1.0


def test_ceiling_brute_force_matches_counting_at_tiny_size():
    spec = SynthSpec(num_queries=1, n=5, scale_len=6, skew=3.0, task="comparative")
    fast = pointwise_oracle_ceiling(spec)
    slow = synth.pointwise_oracle_ceiling_bruteforce(spec)
    assert fast == pytest.approx(slow, abs=1e-12)
    assert 0.0 < fast < 1.0


def test_ceiling_monotone_in_skew():
    values = [pointwise_oracle_ceiling(
        SynthSpec(num_queries=1, n=8, scale_len=24, skew=s, task="comparative"))
        for s in (0.0, 2.0, 4.0, 6.0)]
    assert all(b > a for a, b in zip(values, values[1:]))


def test_posterior_scorer_empirically_matches_ceiling():
    """Score generated data with the posterior (scale-descending) rule; its
    sample MRR@10 must approach the exact ceiling."""
    spec = SynthSpec(num_queries=4000, n=8, seed=8, task="comparative",
                     scale_len=12, skew=3.0)
    data = generate(spec)
    scale = synth.SCALE_WORDS[: spec.scale_len]
    by_query = {}
    for r in data.run:
        by_query.setdefault(r.query_id, []).append(r.doc_id)
    from crossrank.data import RunRecord
    records = []
    for qid, doc_ids in by_query.items():
        scored = sorted(doc_ids, key=lambda d: (
            -synth.passage_scale_value(data.corpus[d][1], scale), d))
        records += [RunRecord(qid, d, i + 1, float(len(scored) - i), "bayes")
                    for i, d in enumerate(scored)]
    empirical = mrr_at_k(records, data.qrels, k=10).mean
    exact = pointwise_oracle_ceiling(spec)
    assert empirical == pytest.approx(exact, abs=0.02)


def test_titles_carry_filler():
    data = generate(SynthSpec(num_queries=5, n=5, seed=9, task="comparative"))
    for title, _ in data.corpus.values():
        assert title.strip()

"""Attention similarity statistics and score-distribution exports."""

import math

import numpy as np
import pytest

from crossrank import analysis as an
from crossrank.data import QrelRecord, RunRecord


def test_cosine_identical_vectors():
    v = np.array([0.3, -1.2, 4.0])
    assert an.attention_similarity(v, v) == pytest.approx(1.0, abs=1e-12)


def test_cosine_orthogonal():
    assert an.attention_similarity([1.0, 0.0], [0.0, 2.0]) == pytest.approx(0.0, abs=1e-15)


def test_cosine_hand_value():
    got = an.attention_similarity([1.0, 2.0, 2.0], [2.0, 1.0, 2.0])
    assert got == pytest.approx(8.0 / 9.0, abs=1e-12)


def test_cosine_zero_vector_raises():
    with pytest.raises(an.ZeroVectorError):
        an.attention_similarity([0.0, 0.0], [1.0, 1.0])


def test_attention_records_pairs_and_symmetry():
    rng = np.random.default_rng(0)
    dump = {3: rng.normal(size=(4, 8)), 4: rng.normal(size=(4, 8))}
    records = an.attention_records("q1", dump, labels=[1, 0, 0, 1])
    assert len(records) == 2 * 6  # C(4,2) pairs per layer
    for r in records:
        assert abs(r.similarity) <= 1 + 1e-12
        # symmetry: recomputing with swapped arguments matches
        swapped = an.attention_similarity(dump[r.layer][r.k], dump[r.layer][r.i])
        assert r.similarity == pytest.approx(swapped, abs=1e-15)


def test_label_pair_mean_values_and_missing():
    recs = [an.AttentionRecord("q", 2, 0, 1, 1, 1, 0.2),
            an.AttentionRecord("q", 2, 0, 2, 1, 0, 0.9),
            an.AttentionRecord("q", 2, 1, 2, 1, 0, 0.7),
            an.AttentionRecord("q", 2, 2, 3, 0, 0, 0.6)]
    assert an.label_pair_mean(recs, "q", 2, 1, 1) == pytest.approx(0.2)
    assert an.label_pair_mean(recs, "q", 2, 1, 0) == pytest.approx(0.8)
    assert an.label_pair_mean(recs, "q", 2, 0, 1) == pytest.approx(0.8)  # symmetric
    assert an.label_pair_mean(recs, "q", 2, 3, 3) is None  # missing, not zero


def test_normalize_layer():
    out = an.normalize_layer([0.2, 0.6, 1.0])
    assert np.allclose(out, [0.0, 0.5, 1.0])
    assert np.allclose(an.normalize_layer([0.4, 0.4]), [0.5, 0.5])
    assert np.allclose(an.normalize_layer([7.0]), [0.5])


def test_normalize_layer_order_preserving():
    rng = np.random.default_rng(1)
    values = rng.normal(size=20)
    normalized = an.normalize_layer(values)
    assert np.array_equal(np.argsort(values), np.argsort(normalized))


def test_summarize_attention_groups_layers():
    rng = np.random.default_rng(2)
    records = []
    for qid in ("q1", "q2"):
        dump = {1: rng.normal(size=(3, 6)), 2: rng.normal(size=(3, 6))}
        records += an.attention_records(qid, dump, labels=[1, 1, 0])
    summaries = an.summarize_attention(records)
    layers = {s.layer for s in summaries}
    assert layers == {1, 2}
    for s in summaries:
        assert 0.0 <= s.normalized <= 1.0
        assert s.pair_queries == 2


def test_attention_dump_roundtrip(tmp_path):
    rng = np.random.default_rng(3)
    records = an.attention_records("q9", {5: rng.normal(size=(3, 4))}, [0, 1, 0])
    p = tmp_path / "attn.csv"
    an.write_attention_dump(p, records)
    loaded = an.read_attention_dump(p)
    assert [(r.query_id, r.layer, r.i, r.k, r.label_i, r.label_k) for r in loaded] \
        == [(r.query_id, r.layer, r.i, r.k, r.label_i, r.label_k) for r in records]
    for a, b in zip(loaded, records):
        assert a.similarity == pytest.approx(b.similarity, abs=1e-10)


def test_score_distribution_rows_and_summary():
    run = [RunRecord("q", "d0", 1, 0.9, "t"), RunRecord("q", "d1", 2, 0.4, "t"),
           RunRecord("q", "dX", 3, 0.1, "t")]
    qrels = [QrelRecord("q", "d0", 3), QrelRecord("q", "d1", 0)]
    rows = an.score_distribution(run, qrels)
    assert rows == [("q", "d0", 3, 0.9), ("q", "d1", 0, 0.4)]  # dX unjudged
    summaries = an.grade_summaries(rows)
    assert summaries[3]["count"] == 1
    assert summaries[3]["mean"] == pytest.approx(0.9)


def test_score_distribution_empty(tmp_path):
    rows = an.score_distribution([], [])
    assert rows == []
    p = tmp_path / "scores.csv"
    an.write_score_distribution(p, rows)
    assert p.read_text() == "query_id,doc_id,grade,score\n"


def test_grade_partition_conserves_rows():
    rng = np.random.default_rng(4)
    run, qrels = [], []
    for qi in range(5):
        for i in range(6):
            run.append(RunRecord(f"q{qi}", f"q{qi}-d{i}", i + 1, float(6 - i), "t"))
            qrels.append(QrelRecord(f"q{qi}", f"q{qi}-d{i}", int(rng.integers(0, 4))))
    rows = an.score_distribution(run, qrels)
    summaries = an.grade_summaries(rows)
    assert sum(s["count"] for s in summaries.values()) == len(rows)
    for grade, s in summaries.items():
        values = [r[3] for r in rows if r[2] == grade]
        assert s["mean"] == pytest.approx(float(np.mean(values)), abs=1e-12)


def test_plots_emit_svg(tmp_path):
    rng = np.random.default_rng(5)
    records = []
    for qid in ("q1", "q2"):
        dump = {3: rng.normal(size=(4, 8)), 4: rng.normal(size=(4, 8))}
        records += an.attention_records(qid, dump, [1, 1, 0, 0])
    summaries = an.summarize_attention(records)
    p1 = tmp_path / "attn.svg"
    an.plot_attention_summary(summaries, p1)
    assert p1.read_text().lstrip().startswith("<?xml")
    rows = [("q", f"d{i}", i % 4, float(rng.random())) for i in range(40)]
    p2 = tmp_path / "scores.svg"
    an.plot_score_distribution(rows, p2)
    assert p2.read_text().lstrip().startswith("<?xml")

"""Post-hoc analysis of the global-attention mechanism and score outputs.

For every layer that ran global attention, the attended [cls] vectors are
recorded per candidate; the analysis computes pairwise cosine similarities,
averages them per (relevance-grade pair, query), min-max normalizes within
each layer, and exports CSVs plus SVG figures.  Score distributions group
re-ranker outputs by judged grade.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


class ZeroVectorError(ValueError):
    """Cosine similarity is undefined for a zero vector."""


@dataclass(frozen=True)
class AttentionRecord:
    """Similarity of one candidate pair at one global-attention layer."""

    query_id: str
    layer: int
    i: int
    k: int
    label_i: int
    label_k: int
    similarity: float


def attention_similarity(a, b):
    """Cosine between two attended [cls] vectors."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0.0 or nb == 0.0:
        raise ZeroVectorError("similarity undefined for a zero vector")
    return float(np.dot(a, b) / (na * nb))


def attention_records(query_id, dump, labels):
    """Pairwise records (i < k) from a {layer: [n, c] array} dump."""
    labels = list(labels)
    records = []
    for layer in sorted(dump):
        vectors = dump[layer]
        n = vectors.shape[0]
        for i in range(n):
            for k in range(i + 1, n):
                records.append(AttentionRecord(
                    query_id, layer, i, k, labels[i], labels[k],
                    attention_similarity(vectors[i], vectors[k])))
    return records


def label_pair_mean(records, query_id, layer, r1, r2):
    """Mean similarity over one query's pairs with grades {r1, r2}.

    Self-pairs never appear (records are built for i < k).  Returns None
    when no pair qualifies; callers must treat that as missing, not zero.
    """
    values = [r.similarity for r in records
              if r.query_id == query_id and r.layer == layer
              and {r.label_i, r.label_k} == {r1, r2}]
    if not values:
        return None
    return math.fsum(values) / len(values)


def normalize_layer(values):
    """Min-max to [0, 1]; a constant (or singleton) set maps to all 0.5."""
    arr = np.asarray(list(values), dtype=np.float64)
    if arr.size == 0:
        return arr
    lo, hi = arr.min(), arr.max()
    if hi == lo:
        return np.full_like(arr, 0.5)
    return (arr - lo) / (hi - lo)


@dataclass
class PairSummary:
    layer: int
    r1: int
    r2: int
    mean: float
    normalized: float
    pair_queries: int


def summarize_attention(records):
    """Per (layer, grade pair): mean of per-query means, raw and after
    per-layer min-max normalization over all per-query values."""
    queries = sorted({r.query_id for r in records})
    layers = sorted({r.layer for r in records})
    grade_pairs = sorted({(min(r.label_i, r.label_k), max(r.label_i, r.label_k))
                          for r in records})
    summaries = []
    for layer in layers:
        keys, raw = [], []
        for qid in queries:
            for (r1, r2) in grade_pairs:
                value = label_pair_mean(records, qid, layer, r1, r2)
                if value is not None:
                    keys.append((qid, r1, r2))
                    raw.append(value)
        normalized = normalize_layer(raw)
        for (r1, r2) in grade_pairs:
            idx = [j for j, (q, a, b) in enumerate(keys) if (a, b) == (r1, r2)]
            if not idx:
                continue
            summaries.append(PairSummary(
                layer, r1, r2,
                mean=float(np.mean([raw[j] for j in idx])),
                normalized=float(np.mean(normalized[idx])),
                pair_queries=len(idx)))
    return summaries


def write_attention_dump(path, records):
    with open(path, "w", encoding="utf-8") as f:
        f.write("query_id,layer,i,k,label_i,label_k,similarity\n")
        for r in records:
            f.write(f"{r.query_id},{r.layer},{r.i},{r.k},"
                    f"{r.label_i},{r.label_k},{r.similarity:.10f}\n")


def read_attention_dump(path):
    records = []
    with open(path, "r", encoding="utf-8") as f:
        header = f.readline()
        for line in f:
            qid, layer, i, k, li, lk, sim = line.strip().split(",")
            records.append(AttentionRecord(qid, int(layer), int(i), int(k),
                                           int(li), int(lk), float(sim)))
    return records


def write_attention_summary(path, summaries):
    with open(path, "w", encoding="utf-8") as f:
        f.write("layer,R1,R2,mean,normalized\n")
        for s in summaries:
            f.write(f"{s.layer},{s.r1},{s.r2},{s.mean:.10f},{s.normalized:.10f}\n")


# --- score distributions -----------------------------------------------------

def score_distribution(run_records, qrel_records):
    """Join run scores with grades: rows (query_id, doc_id, grade, score)."""
    grades = {(r.query_id, r.doc_id): r.grade for r in qrel_records}
    rows = []
    for r in run_records:
        key = (r.query_id, r.doc_id)
        if key in grades:
            rows.append((r.query_id, r.doc_id, grades[key], r.score))
    return rows


def grade_summaries(rows):
    """Per-grade count, mean, and quartiles of the joined scores."""
    by_grade = {}
    for _, _, grade, score in rows:
        by_grade.setdefault(grade, []).append(score)
    out = {}
    for grade in sorted(by_grade):
        values = np.asarray(by_grade[grade])
        q1, med, q3 = np.percentile(values, [25, 50, 75])
        out[grade] = {"count": len(values), "mean": float(values.mean()),
                      "q1": float(q1), "median": float(med), "q3": float(q3)}
    return out


def write_score_distribution(path, rows):
    with open(path, "w", encoding="utf-8") as f:
        f.write("query_id,doc_id,grade,score\n")
        for qid, doc_id, grade, score in rows:
            f.write(f"{qid},{doc_id},{grade},{score:.10f}\n")


def write_grade_summaries(path, summaries):
    with open(path, "w", encoding="utf-8") as f:
        f.write("grade,count,mean,q1,median,q3\n")
        for grade, s in summaries.items():
            f.write(f"{grade},{s['count']},{s['mean']:.10f},"
                    f"{s['q1']:.10f},{s['median']:.10f},{s['q3']:.10f}\n")


# --- figures ------------------------------------------------------------------

def plot_attention_summary(summaries, out_path):
    """One heatmap per layer of normalized pair similarity (SVG)."""
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    layers = sorted({s.layer for s in summaries})
    grades = sorted({g for s in summaries for g in (s.r1, s.r2)})
    fig, axes = plt.subplots(1, max(len(layers), 1),
                             figsize=(3.4 * max(len(layers), 1), 3.2))
    if len(layers) <= 1:
        axes = [axes]
    for ax, layer in zip(axes, layers):
        grid = np.full((len(grades), len(grades)), np.nan)
        for s in summaries:
            if s.layer != layer:
                continue
            a, b = grades.index(s.r1), grades.index(s.r2)
            grid[a, b] = grid[b, a] = s.normalized
        im = ax.imshow(grid, vmin=0, vmax=1, cmap="viridis", origin="lower")
        ax.set_xticks(range(len(grades)), [str(g) for g in grades])
        ax.set_yticks(range(len(grades)), [str(g) for g in grades])
        ax.set_title(f"layer {layer}")
        ax.set_xlabel("grade")
    axes[0].set_ylabel("grade")
    fig.colorbar(im, ax=axes, shrink=0.8, label="normalized similarity")
    fig.savefig(out_path, format="svg")
    plt.close(fig)


def plot_score_distribution(rows, out_path, bins=20):
    """Score histograms per relevance grade (SVG)."""
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    by_grade = {}
    for _, _, grade, score in rows:
        by_grade.setdefault(grade, []).append(score)
    fig, ax = plt.subplots(figsize=(5.0, 3.4))
    for grade in sorted(by_grade):
        ax.hist(by_grade[grade], bins=bins, range=(0.0, 1.0), alpha=0.55,
                label=f"grade {grade}")
    ax.set_xlabel("re-ranker score")
    ax.set_ylabel("documents")
    ax.legend()
    fig.tight_layout()
    fig.savefig(out_path, format="svg")
    plt.close(fig)

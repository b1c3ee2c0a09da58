"""Linear score fusion trained by coordinate ascent against a ranking metric.

The baseline combines per-candidate features (re-ranker score, first-stage
retrieval score, ...) with one weight each.  Features are min-max normalized
per query, one weight is probed at a time over a fixed multiplicative grid,
strictly better objective values are kept, and weights are L1-normalized
after every sweep.  Deterministic given the seed; best-of-restarts.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .data import RunRecord
from .metrics import mrr_at_k

# 12 multiplicative factors probed with both signs, plus zero: 25 candidate
# values per coordinate per sweep.
PROBE_FACTORS = (0.05, 0.1, 0.25, 0.5, 0.75, 0.9, 1.1, 1.5, 2.0, 4.0, 8.0, 16.0)


@dataclass
class FusionModel:
    feature_names: list
    weights: np.ndarray
    degenerate: bool = False  # set when no probed weights scored above zero

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=np.float64)


@dataclass
class QueryFeatures:
    """Raw per-candidate feature matrix [n, F] for one query."""

    query_id: str
    doc_ids: list
    matrix: np.ndarray

    def __post_init__(self):
        self.matrix = np.asarray(self.matrix, dtype=np.float64)
        if self.matrix.shape[0] != len(self.doc_ids):
            raise ValueError(f"{self.query_id}: {len(self.doc_ids)} docs vs "
                             f"{self.matrix.shape[0]} feature rows")


def normalize_features(matrix):
    """Per-query min-max to [0, 1] per column; constant columns map to 0.5."""
    matrix = np.asarray(matrix, dtype=np.float64)
    lo = matrix.min(axis=0, keepdims=True)
    hi = matrix.max(axis=0, keepdims=True)
    span = hi - lo
    out = np.full_like(matrix, 0.5)
    nz = span[0] > 0
    out[:, nz] = (matrix[:, nz] - lo[:, nz]) / span[:, nz]
    return out


def fuse_scores(model, matrix):
    """Weighted sum of per-query-normalized features."""
    normalized = normalize_features(matrix)
    if normalized.shape[1] != len(model.weights):
        raise ValueError(f"feature arity {normalized.shape[1]} != "
                         f"{len(model.weights)} weights")
    return normalized @ model.weights


def fused_run(model, query_features, tag="fusion"):
    records = []
    for qf in query_features:
        scores = fuse_scores(model, qf.matrix)
        order = sorted(range(len(qf.doc_ids)),
                       key=lambda i: (-scores[i], qf.doc_ids[i]))
        records += [RunRecord(qf.query_id, qf.doc_ids[i], rank, float(scores[i]), tag)
                    for rank, i in enumerate(order, 1)]
    return records


def _objective(weights, query_features, qrels, rel_threshold):
    model = FusionModel([""] * len(weights), weights)
    run = fused_run(model, query_features)
    return mrr_at_k(run, qrels, k=10, rel_threshold=rel_threshold).mean


def coordinate_ascent_fit(query_features, qrels, feature_names, restarts=5,
                          sweeps=5, seed=0, rel_threshold=1):
    """Fit fusion weights maximizing MRR@10.

    Starts from the uniform point and from every single-feature axis (so the
    fitted objective can never fall below any single feature's), plus seeded
    random simplex points up to ``restarts`` total.  Returns the model and
    the per-restart objective traces (each nondecreasing by construction).
    """
    n_features = len(feature_names)
    if not query_features:
        raise ValueError("no training queries")
    if any(qf.matrix.shape[1] != n_features for qf in query_features):
        raise ValueError("feature arity mismatch against feature_names")
    rng = np.random.default_rng(seed)
    starts = [np.full(n_features, 1.0 / n_features)]
    starts += [np.eye(n_features)[f] for f in range(n_features)]
    while len(starts) < max(restarts, len(starts)):
        extra = rng.random(n_features)
        starts.append(extra / extra.sum())

    best = None  # (objective, restart index, weights)
    traces = []
    for restart, w0 in enumerate(starts):
        w = w0.copy()
        obj = _objective(w, query_features, qrels, rel_threshold)
        trace = [obj]
        for _ in range(sweeps):
            for coord in range(n_features):
                base = w[coord] if abs(w[coord]) > 1e-12 else 1.0
                candidates = [0.0]
                for g in PROBE_FACTORS:
                    candidates += [base * g, -base * g]
                for value in candidates:
                    probe = w.copy()
                    probe[coord] = value
                    probe_obj = _objective(probe, query_features, qrels,
                                           rel_threshold)
                    if probe_obj > obj:
                        w, obj = probe, probe_obj
                        trace.append(obj)
            norm = np.abs(w).sum()
            if norm > 0:
                w = w / norm
        traces.append(trace)
        if best is None or obj > best[0]:
            best = (obj, restart, w)
    obj, _, w = best
    if obj <= 0.0:
        return FusionModel(list(feature_names), np.full(n_features, 1.0 / n_features),
                           degenerate=True), traces
    return FusionModel(list(feature_names), w), traces


def features_from_runs(named_runs):
    """Join several runs on (query, doc) into per-query feature matrices.

    ``named_runs`` is an ordered {name: [RunRecord]}; every run must cover
    exactly the same (query, doc) pairs.
    """
    names = list(named_runs)
    scores = {name: {(r.query_id, r.doc_id): r.score for r in records}
              for name, records in named_runs.items()}
    keys = {frozenset(s) for s in scores.values()}
    if len(keys) != 1:
        raise ValueError("runs disagree on their (query, doc) pairs")
    by_query = {}
    for r in named_runs[names[0]]:
        by_query.setdefault(r.query_id, []).append(r.doc_id)
    out = []
    for qid, doc_ids in by_query.items():
        matrix = np.array([[scores[name][(qid, d)] for name in names]
                           for d in doc_ids])
        out.append(QueryFeatures(qid, doc_ids, matrix))
    return out


def save_fusion(path, model):
    """Two-line text format: names CSV, then weights CSV (full precision)."""
    with open(path, "w", encoding="utf-8") as f:
        f.write(",".join(model.feature_names) + "\n")
        f.write(",".join(repr(float(w)) for w in model.weights) + "\n")


def load_fusion(path):
    with open(path, "r", encoding="utf-8") as f:
        names = f.readline().strip().split(",")
        weights = [float(x) for x in f.readline().strip().split(",")]
    if len(names) != len(weights):
        raise ValueError(f"{path}: {len(names)} names but {len(weights)} weights")
    return FusionModel(names, np.array(weights))

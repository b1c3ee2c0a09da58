"""Ranking metrics: MRR@k, MRR, MAP, NDCG@k.

Conventions match common trec-eval behavior: queries with no qrels entries
are excluded from the mean; queries that are judged but have no relevant
document score 0.  On graded judgments, MRR and MAP binarize at
``rel_threshold`` (grade >= threshold is relevant); NDCG uses the burst gain
2^grade - 1 with a log2(rank + 1) discount.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field


@dataclass
class EvalResult:
    metric: str
    per_query: dict = field(default_factory=dict)
    mean: float = 0.0

    @property
    def query_count(self):
        return len(self.per_query)


def _runs_by_query(run_records):
    by_query = {}
    for r in run_records:
        by_query.setdefault(r.query_id, []).append(r)
    for qid in by_query:
        by_query[qid].sort(key=lambda r: r.rank)
    return by_query


def _grades_by_query(qrel_records):
    grades = {}
    for r in qrel_records:
        grades.setdefault(r.query_id, {})[r.doc_id] = r.grade
    return grades


def _finish(metric, per_query):
    result = EvalResult(metric, per_query)
    result.mean = sum(per_query.values()) / len(per_query) if per_query else 0.0
    return result


def mrr_at_k(run_records, qrel_records, k=10, rel_threshold=1):
    """Mean reciprocal rank of the first relevant document within top-k."""
    runs = _runs_by_query(run_records)
    grades = _grades_by_query(qrel_records)
    per_query = {}
    for qid, rows in runs.items():
        if qid not in grades:
            continue  # unjudged query: excluded from the mean
        value = 0.0
        for r in rows[:k]:
            if grades[qid].get(r.doc_id, 0) >= rel_threshold:
                value = 1.0 / r.rank
                break
        per_query[qid] = value
    return _finish(f"mrr@{k}", per_query)


def mrr(run_records, qrel_records, rel_threshold=1):
    """MRR over the full run depth."""
    result = mrr_at_k(run_records, qrel_records, k=10 ** 9,
                      rel_threshold=rel_threshold)
    result.metric = "mrr"
    return result


def average_precision(run_records, qrel_records, rel_threshold=1):
    """MAP over the full run depth, normalized by the total relevant count."""
    runs = _runs_by_query(run_records)
    grades = _grades_by_query(qrel_records)
    per_query = {}
    for qid, rows in runs.items():
        if qid not in grades:
            continue
        relevant = {d for d, g in grades[qid].items() if g >= rel_threshold}
        if not relevant:
            per_query[qid] = 0.0
            continue
        hits = 0
        total = 0.0
        for r in rows:
            if r.doc_id in relevant:
                hits += 1
                total += hits / r.rank
        per_query[qid] = total / len(relevant)
    return _finish("map", per_query)


def ndcg_at_k(run_records, qrel_records, k=10):
    """NDCG@k with gain 2^grade - 1 and discount log2(rank + 1)."""
    runs = _runs_by_query(run_records)
    grades = _grades_by_query(qrel_records)
    per_query = {}
    for qid, rows in runs.items():
        if qid not in grades:
            continue
        gains = grades[qid]
        dcg = 0.0
        for r in rows[:k]:
            g = gains.get(r.doc_id, 0)
            dcg += (2 ** g - 1) / math.log2(r.rank + 1)
        ideal = sorted(gains.values(), reverse=True)[:k]
        idcg = sum((2 ** g - 1) / math.log2(i + 2) for i, g in enumerate(ideal))
        per_query[qid] = dcg / idcg if idcg > 0 else 0.0
    return _finish(f"ndcg@{k}", per_query)


METRIC_BUILDERS = {
    "mrr10": lambda run, qrels, thr: mrr_at_k(run, qrels, 10, thr),
    "mrr": lambda run, qrels, thr: mrr(run, qrels, thr),
    "map": lambda run, qrels, thr: average_precision(run, qrels, thr),
    "ndcg10": lambda run, qrels, thr: ndcg_at_k(run, qrels, 10),
}


def evaluate(run_records, qrel_records, metric_names, rel_threshold=1):
    """Compute a named subset of metrics; returns {name: EvalResult}."""
    out = {}
    for name in metric_names:
        if name not in METRIC_BUILDERS:
            raise ValueError(f"unknown metric {name!r}; "
                             f"choose from {sorted(METRIC_BUILDERS)}")
        out[name] = METRIC_BUILDERS[name](run_records, qrel_records, rel_threshold)
    return out


def write_report(path, results):
    """Per-query rows plus a final "all" row, one column per metric."""
    names = list(results)
    qids = sorted({q for r in results.values() for q in r.per_query})
    with open(path, "w", encoding="utf-8") as f:
        f.write("query_id," + ",".join(names) + "\n")
        for qid in qids:
            cells = [f"{results[n].per_query[qid]:.6f}" if qid in results[n].per_query
                     else "" for n in names]
            f.write(f"{qid}," + ",".join(cells) + "\n")
        f.write("all," + ",".join(f"{results[n].mean:.6f}" for n in names) + "\n")

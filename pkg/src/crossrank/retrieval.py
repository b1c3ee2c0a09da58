"""First-stage retrieval: Okapi BM25 over an in-memory inverted index.

Supplies the top-n candidates and the retrieval-score feature for the
re-ranker.  Uses the same word-level tokenizer as the model input pipeline,
and the nonnegative-idf BM25 variant so downstream feature normalization
stays well-behaved.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

from .data import Candidate, CandidateSet
from .text import word_split


class IndexError_(ValueError):
    """Raised on inconsistent corpus input (duplicate ids, missing docs)."""


@dataclass
class InvertedIndex:
    postings: dict = field(default_factory=dict)  # term -> [(doc_id, tf)] sorted
    doc_lengths: dict = field(default_factory=dict)
    doc_count: int = 0
    avg_doc_length: float = 0.0
    docs: dict = field(default_factory=dict)  # doc_id -> (title, passage)


def index_text(title, passage):
    """The searchable text of a document: title plus passage."""
    return f"{title} {passage}" if title else passage


def build_index(docs):
    """Deterministic inverted index over {doc_id: (title, passage)}."""
    index = InvertedIndex()
    seen = set()
    for doc_id, (title, passage) in docs.items():
        if doc_id in seen:
            raise IndexError_(f"duplicate doc_id {doc_id}")
        seen.add(doc_id)
        tokens = word_split(index_text(title, passage))
        index.doc_lengths[doc_id] = len(tokens)
        index.docs[doc_id] = (title, passage)
        tf = {}
        for t in tokens:
            tf[t] = tf.get(t, 0) + 1
        for term, count in tf.items():
            index.postings.setdefault(term, []).append((doc_id, count))
    for term in index.postings:
        index.postings[term].sort(key=lambda e: e[0])
    index.doc_count = len(index.doc_lengths)
    total = sum(index.doc_lengths.values())
    index.avg_doc_length = total / index.doc_count if index.doc_count else 0.0
    return index


def bm25_term_weight(tf, df, doc_len, avg_len, doc_count, k1=0.9, b=0.4):
    """Okapi BM25 contribution of one term occurrence set in one document."""
    idf = math.log(1.0 + (doc_count - df + 0.5) / (df + 0.5))
    denom = tf + k1 * (1.0 - b + b * doc_len / avg_len) if avg_len > 0 else tf + k1
    return idf * tf * (k1 + 1.0) / denom


def bm25_search(index, query, k, k1=0.9, b=0.4):
    """Top-k (doc_id, score) by BM25; ties break by doc_id ascending."""
    if k < 1:
        raise ValueError("k must be >= 1")
    scores = {}
    for term in word_split(query):
        plist = index.postings.get(term)
        if not plist:
            continue  # unseen terms contribute 0 to every document
        df = len(plist)
        for doc_id, tf in plist:
            w = bm25_term_weight(tf, df, index.doc_lengths[doc_id],
                                 index.avg_doc_length, index.doc_count, k1, b)
            scores[doc_id] = scores.get(doc_id, 0.0) + w
    ranked = sorted(scores.items(), key=lambda kv: (-kv[1], kv[0]))
    return ranked[:k]


def assemble_candidate_sets(run_records, docs, queries, n):
    """Top-n run entries per query joined with their stored text.

    Keeps the first-stage rank and raw score; queries appear in run order.
    """
    by_query = {}
    order = []
    for r in run_records:
        if r.query_id not in by_query:
            by_query[r.query_id] = []
            order.append(r.query_id)
        by_query[r.query_id].append(r)
    sets = []
    for qid in order:
        if qid not in queries:
            raise IndexError_(f"query {qid} in run but not in queries file")
        rows = sorted(by_query[qid], key=lambda r: r.rank)[:n]
        candidates = []
        for r in rows:
            if r.doc_id not in docs:
                raise IndexError_(f"doc {r.doc_id} in run but not in corpus")
            title, passage = docs[r.doc_id]
            candidates.append(Candidate(r.doc_id, title, passage,
                                        r.score, r.rank))
        sets.append(CandidateSet(qid, queries[qid], candidates))
    return sets


def save_index(path, index):
    """JSON snapshot of an index; deterministic (sorted keys)."""
    payload = {
        "doc_count": index.doc_count,
        "avg_doc_length": index.avg_doc_length,
        "doc_lengths": index.doc_lengths,
        "postings": {t: p for t, p in index.postings.items()},
        "docs": {d: list(v) for d, v in index.docs.items()},
    }
    with open(path, "w", encoding="utf-8") as f:
        json.dump(payload, f, sort_keys=True, separators=(",", ":"))


def load_index(path):
    with open(path, "r", encoding="utf-8") as f:
        payload = json.load(f)
    index = InvertedIndex()
    index.doc_count = payload["doc_count"]
    index.avg_doc_length = payload["avg_doc_length"]
    index.doc_lengths = payload["doc_lengths"]
    index.postings = {t: [(d, c) for d, c in p] for t, p in payload["postings"].items()}
    index.docs = {d: (t, x) for d, (t, x) in payload["docs"].items()}
    return index

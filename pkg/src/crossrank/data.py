"""Core ranking records and the file formats they travel in.

Formats (all UTF-8):
  corpus   tab-separated  "doc_id<TAB>title<TAB>passage", or JSONL with
           fields {id, title, text}
  queries  tab-separated  "query_id<TAB>text"
  qrels    TREC 4-column  "qid 0 docid grade"
  run      TREC 6-column  "qid Q0 docid rank score tag" (scores written
           with 6 decimal places; write -> read is the identity)
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field


class FormatError(ValueError):
    """Raised on malformed input files; message carries the line number."""


@dataclass(frozen=True)
class Candidate:
    """One retrieved document inside a candidate set."""

    doc_id: str
    title: str
    passage: str
    retrieval_score: float
    first_stage_rank: int


@dataclass
class CandidateSet:
    """A query with its retrieved candidates: the unit of listwise scoring."""

    query_id: str
    query_text: str
    candidates: list = field(default_factory=list)

    def __post_init__(self):
        ids = [c.doc_id for c in self.candidates]
        if len(set(ids)) != len(ids):
            raise ValueError(f"duplicate doc_id in candidate set {self.query_id}")

    @property
    def n(self):
        return len(self.candidates)


@dataclass(frozen=True)
class RunRecord:
    query_id: str
    doc_id: str
    rank: int
    score: float
    tag: str


@dataclass(frozen=True)
class QrelRecord:
    query_id: str
    doc_id: str
    grade: int


def read_corpus(path):
    """Load a corpus file into {doc_id: (title, passage)}.

    Dispatches on content: lines starting with '{' parse as JSONL, others as
    the 3-column TSV format.
    """
    docs = {}
    with open(path, "r", encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            line = line.rstrip("\n")
            if not line:
                continue
            if line.lstrip().startswith("{"):
                try:
                    obj = json.loads(line)
                    doc_id, title, passage = str(obj["id"]), obj.get("title", ""), obj["text"]
                except (json.JSONDecodeError, KeyError) as exc:
                    raise FormatError(f"{path}:{lineno}: bad JSONL corpus line: {exc}") from None
            else:
                parts = line.split("\t")
                if len(parts) != 3:
                    raise FormatError(
                        f"{path}:{lineno}: expected 3 tab-separated fields, got {len(parts)}")
                doc_id, title, passage = parts
            if doc_id in docs:
                raise FormatError(f"{path}:{lineno}: duplicate doc_id {doc_id}")
            docs[doc_id] = (title, passage)
    return docs


def write_corpus(path, docs):
    with open(path, "w", encoding="utf-8") as f:
        for doc_id, (title, passage) in docs.items():
            f.write(f"{doc_id}\t{title}\t{passage}\n")


def read_queries(path):
    """Load "query_id<TAB>text" into an ordered {qid: text} dict."""
    queries = {}
    with open(path, "r", encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 2:
                raise FormatError(
                    f"{path}:{lineno}: expected 2 tab-separated fields, got {len(parts)}")
            queries[parts[0]] = parts[1]
    return queries


def write_queries(path, queries):
    with open(path, "w", encoding="utf-8") as f:
        for qid, text in queries.items():
            f.write(f"{qid}\t{text}\n")


def read_qrels(path):
    records = []
    with open(path, "r", encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            parts = line.split()
            if not parts:
                continue
            if len(parts) != 4:
                raise FormatError(f"{path}:{lineno}: expected 4 fields, got {len(parts)}")
            qid, _, doc_id, grade = parts
            try:
                grade = int(grade)
            except ValueError:
                raise FormatError(f"{path}:{lineno}: grade {grade!r} is not an integer") from None
            if grade < 0:
                raise FormatError(f"{path}:{lineno}: negative grade {grade}")
            records.append(QrelRecord(qid, doc_id, grade))
    return records


def write_qrels(path, records):
    with open(path, "w", encoding="utf-8") as f:
        for r in records:
            f.write(f"{r.query_id} 0 {r.doc_id} {r.grade}\n")


def read_run(path):
    """Parse a TREC run file; validates rank contiguity and score ordering."""
    records = []
    with open(path, "r", encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            parts = line.split()
            if not parts:
                continue
            if len(parts) != 6:
                raise FormatError(f"{path}:{lineno}: expected 6 fields, got {len(parts)}")
            qid, _, doc_id, rank, score, tag = parts
            try:
                rank = int(rank)
                score = float(score)
            except ValueError:
                raise FormatError(f"{path}:{lineno}: bad rank/score in {line!r}") from None
            records.append(RunRecord(qid, doc_id, rank, score, tag))
    _validate_run(records, path)
    return records


def _validate_run(records, source="run"):
    by_query = {}
    for r in records:
        by_query.setdefault(r.query_id, []).append(r)
    for qid, rows in by_query.items():
        rows = sorted(rows, key=lambda r: r.rank)
        ranks = [r.rank for r in rows]
        if ranks != list(range(1, len(rows) + 1)):
            raise FormatError(f"{source}: query {qid}: ranks not contiguous from 1")
        scores = [r.score for r in rows]
        if any(a < b for a, b in zip(scores, scores[1:])):
            raise FormatError(f"{source}: query {qid}: scores increase with rank")


def write_run(path, records):
    _validate_run(records, str(path))
    with open(path, "w", encoding="utf-8") as f:
        for r in records:
            f.write(f"{r.query_id} Q0 {r.doc_id} {r.rank} {r.score:.6f} {r.tag}\n")


def run_from_scores(query_id, doc_scores, tag, tie_key=None):
    """Build rank-ordered RunRecords from {doc_id: score}; ties break by
    ``tie_key`` (doc_id ascending when not given)."""
    if tie_key is None:
        tie_key = {}
    ordered = sorted(doc_scores.items(),
                     key=lambda kv: (-kv[1], tie_key.get(kv[0], 0), kv[0]))
    return [RunRecord(query_id, doc_id, rank, score, tag)
            for rank, (doc_id, score) in enumerate(ordered, 1)]

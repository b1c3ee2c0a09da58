"""BM25 retrieval over a toy corpus, evaluated with the ranking metrics.

Builds an inverted index over a handful of documents, retrieves for two
queries, and walks through MRR@10 / MAP / NDCG@10 computation.
"""

from crossrank.data import QrelRecord, RunRecord
from crossrank.metrics import evaluate
from crossrank.retrieval import bm25_search, build_index

corpus = {
    "d1": ("Granite quarry", "granite quarry operations in the north ridge"),
    "d2": ("Limestone kiln", "limestone kiln firing schedule and safety"),
    "d3": ("Harbor tides", "harbor tide tables for the spring season"),
    "d4": ("Quarry safety", "quarry blasting safety rules and granite dust"),
    "d5": ("Kiln repair", "repairing the limestone kiln lining"),
}

index = build_index(corpus)
print(f"indexed {index.doc_count} docs, {len(index.postings)} terms, "
      f"avg length {index.avg_doc_length:.1f}")

queries = {"q1": "granite quarry", "q2": "limestone kiln"}
qrels = [
    QrelRecord("q1", "d1", 3), QrelRecord("q1", "d4", 1),
    QrelRecord("q2", "d2", 3), QrelRecord("q2", "d5", 2),
]

run = []
for qid, text in queries.items():
    hits = bm25_search(index, text, k=5)
    print(f"\n{qid}: {text!r}")
    for rank, (doc_id, score) in enumerate(hits, 1):
        print(f"  {rank}. {doc_id}  bm25={score:.3f}  ({corpus[doc_id][0]})")
        run.append(RunRecord(qid, doc_id, rank, score, "demo"))

print("\nmetrics (graded qrels, threshold 2 for binary metrics):")
for name, res in evaluate(run, qrels, ["mrr10", "map", "ndcg10"],
                          rel_threshold=2).items():
    print(f"  {name:7s} = {res.mean:.4f}  over {res.query_count} queries")

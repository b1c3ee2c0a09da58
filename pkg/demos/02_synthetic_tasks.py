"""The two synthetic ranking tasks and their oracle structure.

The pointwise task is solvable by reading one candidate at a time; the
comparative task is not: two candidates dissent from the bulk value and only
set-level comparison can tell which.  The exact expected MRR@10 of the best
isolated scorer comes from exhaustive enumeration of the generator's
outcomes, and sits strictly below the set-aware oracle's 1.0.
"""

from crossrank.metrics import mrr_at_k
from crossrank.synth import (SynthSpec, bow_oracle_run, generate,
                             pointwise_oracle_ceiling,
                             pointwise_oracle_ceiling_bruteforce,
                             set_oracle_run)

print("pointwise task -------------------------------------------------")
spec_p = SynthSpec(num_queries=50, n=8, seed=11, task="pointwise")
data_p = generate(spec_p)
qid = sorted(data_p.queries)[0]
print("query:", data_p.queries[qid])
for q in data_p.qrels[:8]:
    title, passage = data_p.corpus[q.doc_id]
    print(f"  grade {q.grade}  {passage}")
bow = mrr_at_k(bow_oracle_run(data_p), data_p.qrels, k=10).mean
print(f"bag-of-words rule MRR@10 = {bow:.3f}  (solvable in isolation)")

print("\ncomparative task -----------------------------------------------")
spec_c = SynthSpec(num_queries=50, n=8, seed=11, task="comparative",
                   scale_len=24, skew=0.0)
data_c = generate(spec_c)
qid = sorted(data_c.queries)[0]
print("query:", data_c.queries[qid])
labels = {q.doc_id: q.grade for q in data_c.qrels if q.query_id == qid}
for doc_id in sorted(labels):
    print(f"  grade {labels[doc_id]}  {data_c.corpus[doc_id][1]}")

set_aware = mrr_at_k(set_oracle_run(data_c, spec_c), data_c.qrels, k=10).mean
first_stage = mrr_at_k(data_c.run, data_c.qrels, k=10).mean
ceiling = pointwise_oracle_ceiling(spec_c)
print(f"\nset-aware oracle MRR@10      = {set_aware:.3f}")
print(f"first-stage (noise) MRR@10   = {first_stage:.3f}")
print(f"isolated-scorer ceiling      = {ceiling:.4f}  (exact enumeration)")

tiny = SynthSpec(num_queries=1, n=5, scale_len=6, skew=2.0, task="comparative")
print(f"\ntiny-size cross-check (n=5, scale 6): counting form "
      f"{pointwise_oracle_ceiling(tiny):.6f} == brute force "
      f"{pointwise_oracle_ceiling_bruteforce(tiny):.6f}")

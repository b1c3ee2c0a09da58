"""Attention-similarity statistics and score-distribution exports.

Scores comparative candidate sets with an (untrained) model, records the
globally-attended [cls] vectors per layer, summarizes pairwise cosine
similarity by relevance-grade pair, and renders the SVG figures.
"""

from pathlib import Path

from crossrank.analysis import (attention_records, grade_summaries,
                                plot_attention_summary, plot_score_distribution,
                                score_distribution, summarize_attention,
                                write_attention_summary)
from crossrank.data import RunRecord
from crossrank.model import ModelConfig, init_params, score_candidates
from crossrank.retrieval import assemble_candidate_sets
from crossrank.synth import SynthSpec, generate
from crossrank.text import Vocab

out = Path("demo_output")
out.mkdir(exist_ok=True)

spec = SynthSpec(num_queries=12, n=6, seed=3, task="comparative", skew=0.0)
data = generate(spec)
vocab = Vocab.build([p for _, p in data.corpus.values()]
                    + list(data.queries.values()), max_size=512)
config = ModelConfig(L=3, l=2, c=32, heads_local=2, heads_global=2,
                     ffn_size=64, vocab_size=len(vocab), max_seq_len=18)
params = init_params(config, seed=3)

grades = {(q.query_id, q.doc_id): q.grade for q in data.qrels}
records, run = [], []
for cset in assemble_candidate_sets(data.run, data.corpus, data.queries, 6):
    ranked, dump = score_candidates(cset, params, config, vocab, mode="full",
                                    collect_attention=True)
    labels = [grades[(cset.query_id, c.doc_id)] for c in cset.candidates]
    records += attention_records(cset.query_id, dump, labels)
    run += [RunRecord(cset.query_id, c.doc_id, c.new_rank, c.score, "demo")
            for c in ranked]

print(f"{len(records)} pairwise similarity records over layers "
      f"{sorted({r.layer for r in records})}")
summaries = summarize_attention(records)
for s in summaries:
    print(f"  layer {s.layer}  grades ({s.r1},{s.r2}): "
          f"mean {s.mean:+.4f}  normalized {s.normalized:.3f}")

write_attention_summary(out / "attention_summary.csv", summaries)
plot_attention_summary(summaries, out / "attention_summary.svg")

rows = score_distribution(run, data.qrels)
for grade, s in grade_summaries(rows).items():
    print(f"grade {grade}: n={s['count']}  mean score {s['mean']:.4f}  "
          f"IQR [{s['q1']:.4f}, {s['q3']:.4f}]")
plot_score_distribution(rows, out / "score_distribution.svg")
print(f"wrote {out}/attention_summary.csv, .svg and score_distribution.svg")

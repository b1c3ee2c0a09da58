"""Train a tiny re-ranker on pointwise data, then fit the fusion baseline.

A 2-layer model learns the answer-token task in a couple hundred steps; the
coordinate-ascent baseline then fuses its scores with the first-stage
scores.  Takes about a minute on a laptop CPU.
"""

import numpy as np

from crossrank.fusion import coordinate_ascent_fit, features_from_runs, fused_run
from crossrank.metrics import mrr_at_k
from crossrank.model import ModelConfig, init_params, rerank_run
from crossrank.retrieval import assemble_candidate_sets
from crossrank.synth import SynthSpec, generate
from crossrank.text import Vocab
from crossrank.training import TrainConfig, examples_from_qrels, train

spec = SynthSpec(num_queries=80, n=6, seed=5, task="pointwise",
                 distractor_strength=0.0)
data = generate(spec)
qids = sorted(data.queries)
train_ids, test_ids = set(qids[:60]), set(qids[60:])

vocab = Vocab.build([p for _, p in data.corpus.values()]
                    + list(data.queries.values()), max_size=1024)
sets = assemble_candidate_sets(data.run, data.corpus, data.queries, 6)
train_sets = [s for s in sets if s.query_id in train_ids]
test_sets = [s for s in sets if s.query_id in test_ids]
test_qrels = [q for q in data.qrels if q.query_id in test_ids]

config = ModelConfig(L=2, l=2, c=32, heads_local=2, heads_global=2,
                     ffn_size=64, vocab_size=len(vocab), max_seq_len=24)
params = init_params(config, seed=5)

before = rerank_run(test_sets, params, config, vocab, mode="no_feature")
print(f"untrained test MRR@10: {mrr_at_k(before, test_qrels).mean:.3f}")

examples = examples_from_qrels(train_sets, data.qrels)
rows = train(params, config,
             TrainConfig("warmup_no_feature", learning_rate=2e-3, steps=250,
                         batch=4, seed=5, checkpoint_every=50),
             examples, vocab, val_examples=examples[:20])
print("loss trace:", " ".join(f"{r.loss:.3f}" for r in rows[::50]))

after = rerank_run(test_sets, params, config, vocab, mode="no_feature")
reranker_mrr = mrr_at_k(after, test_qrels).mean
first_stage_mrr = mrr_at_k([r for r in data.run if r.query_id in test_ids],
                           test_qrels).mean
print(f"trained test MRR@10:   {reranker_mrr:.3f}")
print(f"first-stage MRR@10:    {first_stage_mrr:.3f}")

print("\nfusing re-ranker score with the first-stage score:")
train_runs = {
    "reranker": rerank_run(train_sets, params, config, vocab, mode="no_feature"),
    "retrieval": [r for r in data.run if r.query_id in train_ids],
}
features = features_from_runs(train_runs)
model, traces = coordinate_ascent_fit(features, data.qrels,
                                      list(train_runs), seed=5)
print(f"fitted weights: {dict(zip(model.feature_names, np.round(model.weights, 3)))}")
test_features = features_from_runs({
    "reranker": after,
    "retrieval": [r for r in data.run if r.query_id in test_ids],
})
fused = mrr_at_k(fused_run(model, test_features), test_qrels).mean
print(f"fused test MRR@10:     {fused:.3f}")

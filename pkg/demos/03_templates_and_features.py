"""How a candidate becomes model input: score discretization and templating.

The first-stage retrieval score is clipped to a fixed range, min-max
normalized, rounded to an integer bucket, and written into the template as
an ordinary token between the title and the passage.
"""

from crossrank.text import (FeatureSpec, Vocab, build_input, discretize_feature,
                            per_query_spec, render_template, tokenize)

spec = FeatureSpec()  # defaults: clip to [165, 190], 100 buckets
print("dense-retriever style score discretization (clip 165..190):")
for raw in (160.0, 165.0, 170.0, 177.5, 185.0, 190.0, 200.0):
    print(f"  raw {raw:6.1f} -> bucket {discretize_feature(raw, spec):3d}")

print("\nper-query normalization for unbounded scorers (BM25 scores):")
scores = [14.2, 9.1, 7.7, 3.0]
qspec = per_query_spec(scores, buckets=10)
for s in scores:
    print(f"  raw {s:5.1f} -> bucket {discretize_feature(s, qspec):2d} of 10")

print("\ntemplate rendering:")
full = render_template("what is basalt", "Rock types", 50,
                       "basalt is a volcanic rock")
print("  with feature   :", full)
print("  warm-up (none) :", render_template("what is basalt", "Rock types",
                                            None, "basalt is a volcanic rock"))
print("  empty title    :", render_template("what is basalt", "", 50, "..."))

vocab = Vocab.build(["what is basalt a volcanic rock types"], max_size=256)
ids = tokenize(full, vocab)
print("\ntokenized:", ids)
print("  back to tokens:", [vocab.id_to_token[i] for i in ids])

ti = build_input("what is basalt", "Rock types", "basalt is a volcanic rock",
                 50, vocab, max_seq_len=24)
print(f"\nbuild_input: length {ti.length} of 24, mask sum {sum(ti.mask)}")
print("  last real token:", vocab.id_to_token[ti.ids[ti.length - 1]])

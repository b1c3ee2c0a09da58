"""The listwise re-ranker: per-candidate encoder stacks that exchange
information through multi-head attention over their [cls] states.

Each (query, document, feature) triple is templated, tokenized, and encoded
independently for the first l-1 layers.  From layer l on, the [cls] vector of
every candidate in the set is routed through a shared global attention layer
and the attended vector is added back in place, so document-wise information
flows during encoding.  A one-step decoder then cross-attends to each
candidate's own sequence and emits a true/false logit pair; the relevance
score is the probability of "true" under the softmax of exactly those two
logits.

Modes mirror the ablations: "full" uses feature and global attention,
"no_feature" drops the feature slot from the template, "no_global" keeps the
feature but scores candidates independently (a pointwise model).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, fields

import numpy as np

from . import tensor as T
from .tensor import Tensor
from .text import discretize_feature, per_query_spec, build_input

MODES = ("full", "no_feature", "no_global")

MASK_NEG = -1e9  # additive bias that zeroes masked attention columns exactly


class EmptyCandidateSetError(ValueError):
    """Raised when asked to score a set with no candidates."""


@dataclass
class ModelConfig:
    """Architecture hyperparameters.

    ``l`` is the first encoder layer (1-based) whose output goes through
    global attention; ``l = L + 1`` disables the mechanism entirely.
    """

    L: int = 4
    l: int = 3
    c: int = 64
    heads_local: int = 4
    heads_global: int = 4
    ffn_size: int = 256
    vocab_size: int = 8192
    max_seq_len: int = 32
    decoder_layers: int = 1

    def __post_init__(self):
        if not 1 <= self.l <= self.L + 1:
            raise ValueError(f"l must be in [1, L+1], got l={self.l}, L={self.L}")
        if self.c % self.heads_local or self.c % self.heads_global:
            raise ValueError(f"hidden size {self.c} not divisible by head counts")
        if self.decoder_layers < 1:
            raise ValueError("decoder_layers must be >= 1")

    def save(self, path):
        with open(path, "w", encoding="utf-8") as f:
            for fld in fields(self):
                f.write(f"{fld.name} = {getattr(self, fld.name)}\n")

    @classmethod
    def load(cls, path):
        values = {}
        with open(path, "r", encoding="utf-8") as f:
            for line in f:
                line = line.strip()
                if not line or line.startswith("#"):
                    continue
                key, _, value = line.partition("=")
                values[key.strip()] = int(value.strip())
        return cls(**values)


@dataclass(frozen=True)
class ScoredCandidate:
    doc_id: str
    score: float
    new_rank: int


def _linear_params(params, rng, name, n_in, n_out, std):
    params[f"{name}.w"] = Tensor(rng.normal(0.0, std, size=(n_in, n_out)),
                                 requires_grad=True)
    params[f"{name}.b"] = Tensor(np.zeros(n_out), requires_grad=True)


def _ln_params(params, name, width):
    params[f"{name}.g"] = Tensor(np.ones(width), requires_grad=True)
    params[f"{name}.b"] = Tensor(np.zeros(width), requires_grad=True)


def _attn_params(params, rng, name, width, std):
    for proj in ("wq", "wk", "wv", "wo"):
        _linear_params(params, rng, f"{name}.{proj}", width, width, std)


def init_params(config, seed=0, std=0.02):
    """Fresh scaled-normal parameters.  Global-attention weights are drawn
    last so configs differing only in ``l`` share all other initial values."""
    rng = np.random.default_rng(seed)
    p = {}
    c = config.c
    p["embed.tok"] = Tensor(rng.normal(0.0, std, size=(config.vocab_size, c)),
                            requires_grad=True)
    p["embed.pos"] = Tensor(rng.normal(0.0, std, size=(config.max_seq_len, c)),
                            requires_grad=True)
    for j in range(1, config.L + 1):
        _ln_params(p, f"enc{j}.ln1", c)
        _attn_params(p, rng, f"enc{j}.attn", c, std)
        _ln_params(p, f"enc{j}.ln2", c)
        _linear_params(p, rng, f"enc{j}.ffn.fc1", c, config.ffn_size, std)
        _linear_params(p, rng, f"enc{j}.ffn.fc2", config.ffn_size, c, std)
    _ln_params(p, "enc.final_ln", c)
    p["dec.start"] = Tensor(rng.normal(0.0, std, size=(c,)), requires_grad=True)
    for j in range(1, config.decoder_layers + 1):
        _ln_params(p, f"dec{j}.ln1", c)
        _attn_params(p, rng, f"dec{j}.self", c, std)
        _ln_params(p, f"dec{j}.ln2", c)
        _attn_params(p, rng, f"dec{j}.cross", c, std)
        _ln_params(p, f"dec{j}.ln3", c)
        _linear_params(p, rng, f"dec{j}.ffn.fc1", c, config.ffn_size, std)
        _linear_params(p, rng, f"dec{j}.ffn.fc2", config.ffn_size, c, std)
    _ln_params(p, "dec.final_ln", c)
    _linear_params(p, rng, "head", c, 2, std)  # columns: [true, false]
    for j in range(config.l, config.L + 1):
        _ln_params(p, f"glob{j}.ln", c)
        _attn_params(p, rng, f"glob{j}", c, std)
    return p


def params_from_arrays(arrays):
    """Wrap checkpoint arrays back into trainable tensors."""
    return {name: Tensor(a, requires_grad=True) for name, a in arrays.items()}


def zero_global_output(params, config):
    """Zero every global-attention output projection in place; with this the
    mechanism contributes exactly nothing (full mode == no_global mode)."""
    for j in range(config.l, config.L + 1):
        params[f"glob{j}.wo.w"] = Tensor(np.zeros_like(params[f"glob{j}.wo.w"].data),
                                         requires_grad=True)
        params[f"glob{j}.wo.b"] = Tensor(np.zeros_like(params[f"glob{j}.wo.b"].data),
                                         requires_grad=True)


def _linear(x, params, name):
    return T.add(T.matmul(x, params[f"{name}.w"]), params[f"{name}.b"])


def _ln(x, params, name, eps=1e-6):
    return T.layer_norm(x, params[f"{name}.g"], params[f"{name}.b"], eps=eps)


def _split_heads(x, heads):
    # [batch, s, c] -> [batch, heads, s, d]
    b, s, c = x.shape
    return T.transpose(T.reshape(x, (b, s, heads, c // heads)), (0, 2, 1, 3))


def _merge_heads(x):
    b, h, s, d = x.shape
    return T.reshape(T.transpose(x, (0, 2, 1, 3)), (b, s, h * d))


def _mha(q_in, kv_in, params, name, heads, mask_bias=None):
    """Multi-head scaled dot-product attention; ``mask_bias`` is an additive
    constant of shape [batch, 1, 1, s_kv]."""
    d = q_in.shape[-1] // heads
    q = _split_heads(_linear(q_in, params, f"{name}.wq"), heads)
    k = _split_heads(_linear(kv_in, params, f"{name}.wk"), heads)
    v = _split_heads(_linear(kv_in, params, f"{name}.wv"), heads)
    logits = T.mul(T.matmul(q, T.transpose(k, (0, 1, 3, 2))), 1.0 / math.sqrt(d))
    if mask_bias is not None:
        logits = T.add(logits, mask_bias)
    weights = T.softmax(logits, axis=-1)
    return _linear(_merge_heads(T.matmul(weights, v)), params, f"{name}.wo")


def encoder_layer(h, params, j, heads, mask_bias):
    """Pre-norm transformer layer applied independently per candidate."""
    sa_in = _ln(h, params, f"enc{j}.ln1")
    h = T.add(h, _mha(sa_in, sa_in, params, f"enc{j}.attn", heads, mask_bias))
    normed = _ln(h, params, f"enc{j}.ln2")
    ff = _linear(T.relu(_linear(normed, params, f"enc{j}.ffn.fc1")),
                 params, f"enc{j}.ffn.fc2")
    return T.add(h, ff)


def global_attention(cls_states, params, j, heads):
    """Set attention over the n candidates' [cls] vectors.

    Pre-normalized inputs, per-layer learned projections, no positional
    signal over candidates, and no feed-forward sublayer; the caller adds
    the result back (that addition is the residual).  The candidate-axis
    reductions are exactly rounded, so permuting candidates permutes the
    outputs bit-for-bit.
    """
    n, c = cls_states.shape
    d = c // heads
    x = _ln(cls_states, params, f"glob{j}.ln")
    q = T.transpose(T.reshape(_linear(x, params, f"glob{j}.wq"), (n, heads, d)), (1, 0, 2))
    k = T.transpose(T.reshape(_linear(x, params, f"glob{j}.wk"), (n, heads, d)), (1, 0, 2))
    v = T.transpose(T.reshape(_linear(x, params, f"glob{j}.wv"), (n, heads, d)), (1, 0, 2))
    logits = T.mul(T.matmul(q, T.transpose(k, (0, 2, 1))), 1.0 / math.sqrt(d))
    weights = T.softmax_exact(logits, axis=-1)
    mixed = T.matmul_exact(weights, v)  # [heads, n, d]
    merged = T.reshape(T.transpose(mixed, (1, 0, 2)), (n, c))
    return _linear(merged, params, f"glob{j}.wo")


def global_attention_weights(cls_states, params, j, heads):
    """Forward-only attention weight matrix [heads, n, n] (diagnostics)."""
    n, c = cls_states.shape
    d = c // heads
    x = _ln(cls_states, params, f"glob{j}.ln")
    q = T.transpose(T.reshape(_linear(x, params, f"glob{j}.wq"), (n, heads, d)), (1, 0, 2))
    k = T.transpose(T.reshape(_linear(x, params, f"glob{j}.wk"), (n, heads, d)), (1, 0, 2))
    logits = T.mul(T.matmul(q, T.transpose(k, (0, 2, 1))), 1.0 / math.sqrt(d))
    return T.softmax_exact(logits, axis=-1).data


def fuse(cls_states, attended, rest):
    """Eq.-style fusion: add the attended vector at the [cls] slot, leave the
    rest of the sequence untouched."""
    n, c = cls_states.shape
    fused = T.reshape(T.add(cls_states, attended), (n, 1, c))
    return T.concat([fused, rest], axis=1)


def split_cls(h):
    """(h_cls [n, c], rest [n, s-1, c]) views of a hidden stack."""
    n, s, c = h.shape
    cls = T.reshape(T.narrow(h, 1, 0, 1), (n, c))
    rest = T.narrow(h, 1, 1, s)
    return cls, rest


def encode_set(ids, mask, params, config, use_global, collect_attention=False):
    """Run the encoder over a whole candidate set.

    ``ids``/``mask`` are [n, s] integer/0-1 arrays.  Returns the final hidden
    stack [n, s, c] and, when requested, {layer: attended-[cls] ndarray}.
    """
    n, s = ids.shape
    mask_bias = Tensor((1.0 - mask[:, None, None, :]) * MASK_NEG)
    pos = np.arange(s)
    h = T.add(T.embedding(params["embed.tok"], ids),
              T.embedding(params["embed.pos"], pos))
    attention_dump = {}
    for j in range(1, config.L + 1):
        h = encoder_layer(h, params, j, config.heads_local, mask_bias)
        if use_global and j >= config.l:
            cls, rest = split_cls(h)
            attended = global_attention(cls, params, j, config.heads_global)
            if collect_attention:
                attention_dump[j] = attended.data.copy()
            h = fuse(cls, attended, rest)
    h = _ln(h, params, "enc.final_ln")
    return h, attention_dump


def decode_step(enc_out, mask, params, config):
    """One decoding step from the learned start state; returns [n, 2] logits
    for the "true"/"false" tokens."""
    n, s, c = enc_out.shape
    mask_bias = Tensor((1.0 - mask[:, None, None, :]) * MASK_NEG)
    x = T.add(Tensor(np.zeros((n, 1, c))), params["dec.start"])
    for j in range(1, config.decoder_layers + 1):
        sa_in = _ln(x, params, f"dec{j}.ln1")
        x = T.add(x, _mha(sa_in, sa_in, params, f"dec{j}.self", config.heads_local))
        ca_in = _ln(x, params, f"dec{j}.ln2")
        x = T.add(x, _mha(ca_in, enc_out, params, f"dec{j}.cross",
                          config.heads_local, mask_bias))
        ff_in = _ln(x, params, f"dec{j}.ln3")
        ff = _linear(T.relu(_linear(ff_in, params, f"dec{j}.ffn.fc1")),
                     params, f"dec{j}.ffn.fc2")
        x = T.add(x, ff)
    x = _ln(x, params, "dec.final_ln")
    # keep the candidate axis batched: collapsing it into GEMM rows makes
    # the result depend bitwise on n (BLAS gemv/gemm dispatch)
    return T.reshape(_linear(x, params, "head"), (n, 2))


def set_inputs(cset, vocab, config, with_feature, feature_spec=None):
    """Token-id and mask matrices for a candidate set.

    ``feature_spec=None`` normalizes scores per query (min-max over the set),
    the right default for unbounded first-stage scorers like BM25; pass an
    explicit spec for score ranges with known global bounds.
    """
    if cset.n == 0:
        raise EmptyCandidateSetError(f"query {cset.query_id}: empty candidate set")
    if with_feature:
        spec = feature_spec or per_query_spec(
            [c.retrieval_score for c in cset.candidates])
        feats = [discretize_feature(c.retrieval_score, spec) for c in cset.candidates]
    else:
        feats = [None] * cset.n
    rows = [build_input(cset.query_text, c.title, c.passage, f, vocab,
                        config.max_seq_len)
            for c, f in zip(cset.candidates, feats)]
    ids = np.array([r.ids for r in rows], dtype=np.int64)
    mask = np.array([r.mask for r in rows], dtype=np.float64)
    return ids, mask


def candidate_logits(cset, params, config, vocab, mode="full", feature_spec=None,
                     collect_attention=False):
    """[n, 2] true/false logits for every candidate in the set."""
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}, got {mode!r}")
    with_feature = mode != "no_feature"
    use_global = mode != "no_global" and config.l <= config.L
    ids, mask = set_inputs(cset, vocab, config, with_feature, feature_spec)
    enc_out, dump = encode_set(ids, mask, params, config, use_global,
                               collect_attention)
    logits = decode_step(enc_out, mask, params, config)
    return logits, dump


def scores_from_logits(logits_data):
    """P("true") from a [n, 2] logit array, normalized over the pair only."""
    shifted = logits_data - logits_data.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e[:, 0] / (e[:, 0] + e[:, 1])


def score_candidates(cset, params, config, vocab, mode="full", feature_spec=None,
                     collect_attention=False):
    """Score and re-rank one candidate set.

    Returns (ranked ScoredCandidates, attention dump).  Ties in score break
    by first-stage rank so the output is deterministic.
    """
    logits, dump = candidate_logits(cset, params, config, vocab, mode,
                                    feature_spec, collect_attention)
    scores = scores_from_logits(logits.data)
    order = sorted(range(cset.n),
                   key=lambda i: (-scores[i], cset.candidates[i].first_stage_rank))
    ranked = [ScoredCandidate(cset.candidates[i].doc_id, float(scores[i]), rank)
              for rank, i in enumerate(order, 1)]
    return ranked, dump


def rerank_run(csets, params, config, vocab, mode="full", feature_spec=None,
               tag="rerank"):
    """Score many candidate sets into TREC run records."""
    from .data import RunRecord
    records = []
    for cset in csets:
        ranked, _ = score_candidates(cset, params, config, vocab, mode,
                                     feature_spec)
        records += [RunRecord(cset.query_id, c.doc_id, c.new_rank, c.score, tag)
                    for c in ranked]
    return records

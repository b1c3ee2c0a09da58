"""Two-phase fine-tuning: warm up without the feature slot, then continue
with features, optimizing cross-entropy on the true/false decision.

Each training step processes whole candidate sets so the global attention
sees realistic sets; negatives are simply the retrieved non-relevant
candidates.  Everything is deterministic given the seed.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .data import QrelRecord
from .metrics import mrr_at_k
from .model import candidate_logits, rerank_run
from .tensor import save_checkpoint

PHASES = ("warmup_no_feature", "with_feature")


class TrainingDiverged(RuntimeError):
    """Raised when the loss stops being finite; message names the step."""


@dataclass
class TrainConfig:
    phase: str = "warmup_no_feature"
    learning_rate: float = 1e-3  # desk-scale default for training from scratch
    steps: int = 2000
    batch: int = 4  # candidate sets per optimizer step
    seed: int = 0
    checkpoint_every: int = 200

    def __post_init__(self):
        if self.phase not in PHASES:
            raise ValueError(f"phase must be one of {PHASES}")
        if self.steps < 1:
            raise ValueError("steps must be >= 1")
        if self.learning_rate < 0:
            raise ValueError("learning_rate must be >= 0")


@dataclass
class TrainExample:
    """A candidate set and its per-candidate binary relevance targets."""

    cset: object
    targets: np.ndarray  # 1 = decode "true"

    def __post_init__(self):
        if self.cset.n == 0:
            raise ValueError("training example needs at least one candidate")
        self.targets = np.asarray(self.targets, dtype=np.int64)


def default_threshold(qrel_records):
    """Grade >= 2 is relevant on graded judgments, >= 1 on binary ones."""
    max_grade = max((q.grade for q in qrel_records), default=1)
    return 2 if max_grade >= 2 else 1


def examples_from_qrels(csets, qrel_records, rel_threshold=None):
    """Join candidate sets with qrels into training examples."""
    if rel_threshold is None:
        rel_threshold = default_threshold(qrel_records)
    grades = {}
    for q in qrel_records:
        grades.setdefault(q.query_id, {})[q.doc_id] = q.grade
    examples = []
    for cset in csets:
        judged = grades.get(cset.query_id, {})
        targets = [1 if judged.get(c.doc_id, 0) >= rel_threshold else 0
                   for c in cset.candidates]
        examples.append(TrainExample(cset, np.array(targets)))
    return examples


def listwise_loss(logits, targets):
    """Mean cross entropy over the set's true/false decisions.

    The mean is exactly rounded, so reordering candidates cannot change it.
    """
    class_idx = 1 - np.asarray(targets, dtype=np.int64)  # column 0 is "true"
    per = T.cross_entropy_with_logits(logits, class_idx)
    return T.mul(T.exact_sum(per, axis=0), 1.0 / per.shape[0])


class Adam:
    """Standard Adam (beta1=0.9, beta2=0.999, eps=1e-8)."""

    def __init__(self, params, lr, beta1=0.9, beta2=0.999, eps=1e-8):
        self.params = params
        self.lr = lr
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.t = 0
        self.m = {k: np.zeros_like(v.data) for k, v in params.items()}
        self.v = {k: np.zeros_like(v.data) for k, v in params.items()}

    def step(self):
        self.t += 1
        b1c = 1.0 - self.beta1 ** self.t
        b2c = 1.0 - self.beta2 ** self.t
        for name in sorted(self.params):
            p = self.params[name]
            g = p.grad
            if g is None:
                continue
            self.m[name] = self.beta1 * self.m[name] + (1 - self.beta1) * g
            self.v[name] = self.beta2 * self.v[name] + (1 - self.beta2) * g * g
            mhat = self.m[name] / b1c
            vhat = self.v[name] / b2c
            p.data -= self.lr * mhat / (np.sqrt(vhat) + self.eps)

    def zero_grad(self):
        for p in self.params.values():
            p.grad = None


@dataclass
class TrainLogRow:
    step: int
    phase: str
    loss: float
    val_mrr10: float | None = None


def write_metric_log(path, rows):
    with open(path, "w", encoding="utf-8") as f:
        f.write("step,phase,loss,val_mrr10\n")
        for r in rows:
            val = f"{r.val_mrr10:.6f}" if r.val_mrr10 is not None else ""
            f.write(f"{r.step},{r.phase},{r.loss:.6f},{val}\n")


def validation_mrr10(params, config, vocab, val_examples, feature_spec, mode):
    """MRR@10 of the current model over held-out candidate sets."""
    run = rerank_run([e.cset for e in val_examples], params, config, vocab,
                     mode, feature_spec, tag="val")
    qrels = [QrelRecord(e.cset.query_id, c.doc_id, int(t))
             for e in val_examples
             for c, t in zip(e.cset.candidates, e.targets)]
    return mrr_at_k(run, qrels, k=10, rel_threshold=1).mean


def train(params, config, train_config, examples, vocab, feature_spec=None,
          val_examples=None, out_dir=None, log_path=None):
    """Optimize ``params`` in place; returns the metric-log rows.

    The scoring mode follows the phase (feature slot off during warm-up);
    whether global attention runs is the model's own property (config.l).
    Checkpoints are written to ``out_dir`` every ``checkpoint_every`` steps
    plus a ``final.ckpt``.
    """
    if not examples:
        raise ValueError("no training examples")
    mode = "full" if train_config.phase == "with_feature" else "no_feature"
    rng = np.random.default_rng(train_config.seed)
    optimizer = Adam(params, train_config.learning_rate)
    order = []
    rows = []
    for step in range(1, train_config.steps + 1):
        batch = []
        for _ in range(train_config.batch):
            if not order:
                order = list(rng.permutation(len(examples)))
            batch.append(examples[order.pop()])
        optimizer.zero_grad()
        losses = []
        for ex in batch:
            logits, _ = candidate_logits(ex.cset, params, config, vocab, mode,
                                         feature_spec)
            loss = T.mul(listwise_loss(logits, ex.targets), 1.0 / len(batch))
            loss.backward()
            losses.append(loss.item() * len(batch))
        step_loss = math.fsum(losses) / len(batch)
        if not math.isfinite(step_loss):
            raise TrainingDiverged(f"non-finite loss at step {step}")
        optimizer.step()

        row = TrainLogRow(step, train_config.phase, step_loss)
        at_checkpoint = (step % train_config.checkpoint_every == 0
                         or step == train_config.steps)
        if at_checkpoint and val_examples:
            row.val_mrr10 = validation_mrr10(params, config, vocab,
                                             val_examples, feature_spec, mode)
        rows.append(row)
        if at_checkpoint and out_dir:
            save_checkpoint(os.path.join(out_dir, f"step_{step}.ckpt"), params)
    if out_dir:
        save_checkpoint(os.path.join(out_dir, "final.ckpt"), params)
    if log_path:
        write_metric_log(log_path, rows)
    return rows

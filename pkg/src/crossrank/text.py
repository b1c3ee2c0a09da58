"""Tokenization, input templating, and retrieval-score discretization.

A candidate is rendered as one templated string

    Query: <q> Title: <t> Feature: <f> Passage: <d> Relevant:

where the feature slot carries the first-stage retrieval score, min-max
normalized and discretized to an integer in [0, buckets] so the model reads
it as an ordinary token.  Tokenization is deliberately simple: lowercased,
word-level, with the prompt keywords and the digit strings kept as single
vocabulary tokens.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass

PAD, CLS, UNK = "[pad]", "[cls]", "[unk]"
NONE_TITLE = "[none]"
TRUE_TOKEN, FALSE_TOKEN = "true", "false"
PROMPT_QUERY, PROMPT_TITLE = "query:", "title:"
PROMPT_FEATURE, PROMPT_PASSAGE, PROMPT_RELEVANT = "feature:", "passage:", "relevant:"

# Reserved ids are stable: these tokens always occupy the first vocab slots.
RESERVED_TOKENS = (
    [PAD, CLS, UNK, TRUE_TOKEN, FALSE_TOKEN, NONE_TITLE,
     PROMPT_QUERY, PROMPT_TITLE, PROMPT_FEATURE, PROMPT_PASSAGE, PROMPT_RELEVANT]
    + [str(i) for i in range(101)]
)

_WORD_RE = re.compile(
    r"(?:query|title|feature|passage|relevant):"
    r"|\[(?:pad|cls|unk|none)\]"
    r"|[a-z0-9]+"
)


class VocabError(ValueError):
    """Raised when a vocabulary file or construction is invalid."""


class InputTooLongError(ValueError):
    """Raised when the non-passage part of a template exceeds max_seq_len."""


def word_split(text):
    """Lowercased word-level split; prompt keywords survive as single tokens."""
    return _WORD_RE.findall(text.lower())


class Vocab:
    """Bidirectional token<->id map with a fixed reserved prefix."""

    def __init__(self, tokens):
        tokens = list(tokens)
        if tokens[: len(RESERVED_TOKENS)] != RESERVED_TOKENS:
            raise VocabError("vocabulary must start with the reserved tokens")
        if len(set(tokens)) != len(tokens):
            raise VocabError("vocabulary contains duplicate tokens")
        self.id_to_token = tokens
        self.token_to_id = {t: i for i, t in enumerate(tokens)}
        self.pad_id = self.token_to_id[PAD]
        self.cls_id = self.token_to_id[CLS]
        self.unk_id = self.token_to_id[UNK]
        self.true_id = self.token_to_id[TRUE_TOKEN]
        self.false_id = self.token_to_id[FALSE_TOKEN]

    def __len__(self):
        return len(self.id_to_token)

    def id(self, token):
        return self.token_to_id.get(token, self.unk_id)

    @classmethod
    def build(cls, texts, max_size=8192):
        """Word vocabulary from a corpus: reserved tokens plus the most
        frequent words (count desc, then alphabetical for determinism)."""
        counts = {}
        for text in texts:
            for w in word_split(text):
                counts[w] = counts.get(w, 0) + 1
        reserved = set(RESERVED_TOKENS)
        room = max_size - len(RESERVED_TOKENS)
        if room < 0:
            raise VocabError(f"max_size {max_size} smaller than reserved set")
        ranked = sorted((w for w in counts if w not in reserved),
                        key=lambda w: (-counts[w], w))
        return cls(RESERVED_TOKENS + ranked[:room])

    def save(self, path):
        with open(path, "w", encoding="utf-8") as f:
            for token in self.id_to_token:
                f.write(token + "\n")

    @classmethod
    def load(cls, path):
        with open(path, "r", encoding="utf-8") as f:
            tokens = [line.rstrip("\n") for line in f]
        if tokens and tokens[-1] == "":
            tokens.pop()
        return cls(tokens)


def tokenize(text, vocab):
    """Token-id sequence for a text; unknown words map to [unk]."""
    return [vocab.id(w) for w in word_split(text)]


@dataclass(frozen=True)
class FeatureSpec:
    """Clipping range and bucket count for retrieval-score discretization.

    Defaults are the usual constants for dense-retriever score ranges; for
    BM25 or other unbounded scorers use ``per_query_spec`` instead.
    """

    min_raw: float = 165.0
    max_raw: float = 190.0
    buckets: int = 100

    def __post_init__(self):
        if self.min_raw > self.max_raw:
            raise ValueError(f"min_raw {self.min_raw} > max_raw {self.max_raw}")
        if self.buckets < 1:
            raise ValueError("buckets must be >= 1")


def per_query_spec(scores, buckets=100):
    """FeatureSpec spanning one candidate set's raw scores."""
    scores = list(scores)
    return FeatureSpec(min_raw=min(scores), max_raw=max(scores), buckets=buckets)


def discretize_feature(raw, spec):
    """Clip to [min_raw, max_raw], min-max normalize, and round to a bucket.

    Rounding is half-away-from-zero; a degenerate spec (min == max) maps
    everything to 0.
    """
    if not math.isfinite(raw):
        raise ValueError(f"feature value must be finite, got {raw}")
    clipped = min(max(raw, spec.min_raw), spec.max_raw)
    if spec.max_raw == spec.min_raw:
        return 0
    norm = (clipped - spec.min_raw) / (spec.max_raw - spec.min_raw)
    return int(math.floor(norm * spec.buckets + 0.5))


def render_template(query, title, feature, passage):
    """The input template; ``feature=None`` omits the feature segment
    (warm-up phase), an empty title becomes the [none] placeholder."""
    parts = ["Query:", query, "Title:", title if title else NONE_TITLE]
    if feature is not None:
        parts += ["Feature:", str(int(feature))]
    parts += ["Passage:", passage, "Relevant:"]
    return " ".join(parts)


@dataclass
class TokenizedInput:
    """Padded token ids plus the matching attention mask."""

    ids: list
    mask: list

    @property
    def length(self):
        return sum(self.mask)


def build_input(query, title, passage, feature, vocab, max_seq_len):
    """[cls] + tokenized template, truncated passage-only, padded to length.

    Truncation drops passage tokens from the end so the query, title,
    feature, and the trailing "Relevant:" prompt always survive.
    """
    scaffold = [vocab.cls_id]
    scaffold += tokenize(render_template(query, title, feature, ""), vocab)[:-2]
    # the slice removed "passage:" and "relevant:"; re-add around the passage
    passage_ids = tokenize(passage, vocab)
    head = scaffold + [vocab.id(PROMPT_PASSAGE)]
    tail = [vocab.id(PROMPT_RELEVANT)]
    budget = max_seq_len - len(head) - len(tail)
    if budget < 0:
        raise InputTooLongError(
            f"template scaffold needs {len(head) + len(tail)} tokens "
            f"but max_seq_len is {max_seq_len}")
    ids = head + passage_ids[:budget] + tail
    mask = [1] * len(ids)
    pad = max_seq_len - len(ids)
    return TokenizedInput(ids + [vocab.pad_id] * pad, mask + [0] * pad)

"""Listwise re-ranking with templated feature injection and cross-candidate
global attention, plus the retrieval, training, evaluation, fusion, and
analysis machinery around it."""

from .data import Candidate, CandidateSet, QrelRecord, RunRecord
from .model import ModelConfig, ScoredCandidate, init_params, score_candidates
from .text import FeatureSpec, Vocab, discretize_feature, render_template
from .training import TrainConfig, TrainExample, train

__all__ = [
    "Candidate", "CandidateSet", "QrelRecord", "RunRecord",
    "ModelConfig", "ScoredCandidate", "init_params", "score_candidates",
    "FeatureSpec", "Vocab", "discretize_feature", "render_template",
    "TrainConfig", "TrainExample", "train",
]

__version__ = "0.1.0"

from .base import (
    DEFAULT_HYPER,
    ModelKind,
    TrainedModel,
    canonical_order,
    load_model,
    predict_label,
    predict_labels,
    predict_score,
    predict_scores,
    save_model,
    train,
)
from .search import DEFAULT_SEARCH_SPACES, f1_score, random_search, sample_candidate, stratified_folds
from .trees import Tree, TreeEnsemble

__all__ = [
    "DEFAULT_HYPER",
    "DEFAULT_SEARCH_SPACES",
    "ModelKind",
    "TrainedModel",
    "Tree",
    "TreeEnsemble",
    "canonical_order",
    "f1_score",
    "load_model",
    "predict_label",
    "predict_labels",
    "predict_score",
    "predict_scores",
    "random_search",
    "sample_candidate",
    "save_model",
    "stratified_folds",
    "train",
]

"""Uniform train / score interface over the ten classifier kinds."""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Union

import numpy as np
import scipy.sparse as sp
from scipy.special import expit

from ..errors import DimensionError
from ..features import DesignMatrix, FeatureStats, FeatureVector, compute_stats, standardize_array
from . import gbdt
from .linear import LinearParams, fit_linear_svc, fit_logistic
from .neighbors import KNNParams, NBParams, fit_knn, fit_naive_bayes
from .trees import TreeEnsemble, fit_adaboost, fit_decision_tree, fit_random_forest


class ModelKind(str, enum.Enum):
    LR = "LR"
    KNN = "KNN"
    NB = "NB"
    SVC = "SVC"
    DT = "DT"
    RF = "RF"
    ADABOOST = "AdaBoost"
    LIGHTGBM = "LightGBMPreset"
    HGB = "HGBPreset"
    XGBOOST = "XGBoostPreset"

    @property
    def is_tree(self) -> bool:
        return self in TREE_KINDS

    @property
    def standardizes(self) -> bool:
        return self in (ModelKind.LR, ModelKind.SVC, ModelKind.KNN)


TREE_KINDS = frozenset(
    {ModelKind.DT, ModelKind.RF, ModelKind.ADABOOST, ModelKind.LIGHTGBM, ModelKind.HGB, ModelKind.XGBOOST}
)
GBDT_PRESET = {ModelKind.LIGHTGBM: "lightgbm", ModelKind.HGB: "hgb", ModelKind.XGBOOST: "xgboost"}

DEFAULT_HYPER: dict[ModelKind, dict] = {
    ModelKind.LR: {"penalty": "l2", "strength": 0.01},
    ModelKind.KNN: {"k": 15, "metric": "euclidean"},
    ModelKind.NB: {"var_smoothing": 1e-9},
    ModelKind.SVC: {"penalty": "l2", "regularization": 1e-3, "epochs": 20},
    ModelKind.DT: {"max_depth": 5, "min_samples_leaf": 5},
    ModelKind.RF: {"n_trees": 100, "max_depth": 8, "min_samples_leaf": 2, "feature_subsample": 0.3, "bootstrap": True},
    ModelKind.ADABOOST: {"n_stumps": 100, "learning_rate": 0.5},
    ModelKind.LIGHTGBM: {"n_rounds": 100, "learning_rate": 0.1, "max_leaves": 15, "n_bins": 64, "l2": 0.0},
    ModelKind.HGB: {"n_rounds": 100, "learning_rate": 0.1, "max_depth": 3, "n_bins": 64, "l2": 0.0},
    ModelKind.XGBOOST: {"n_rounds": 100, "learning_rate": 0.1, "max_depth": 3, "n_bins": 64, "l2": 1.0},
}

Params = Union[LinearParams, KNNParams, NBParams, TreeEnsemble]


@dataclass
class TrainedModel:
    kind: ModelKind
    hyper: dict
    params: Params
    dim: int
    decision_threshold: float = 0.5
    stats: Optional[FeatureStats] = None
    space_digest: str = ""
    feature_names: tuple[str, ...] = field(default=(), repr=False)

    def __post_init__(self):
        if not 0.0 <= self.decision_threshold <= 1.0:
            raise ValueError(f"decision threshold {self.decision_threshold} outside [0, 1]")

    def with_threshold(self, threshold: float) -> "TrainedModel":
        return TrainedModel(
            self.kind, self.hyper, self.params, self.dim, float(threshold), self.stats, self.space_digest, self.feature_names
        )

    @property
    def ensemble(self) -> Optional[TreeEnsemble]:
        return self.params if isinstance(self.params, TreeEnsemble) else None

    def to_dict(self) -> dict:
        return {
            "kind": self.kind.value,
            "hyper": self.hyper,
            "params": self.params.to_dict(),
            "dim": self.dim,
            "decision_threshold": self.decision_threshold,
            "stats": self.stats.to_dict() if self.stats is not None else None,
            "space_digest": self.space_digest,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TrainedModel":
        kind = ModelKind(d["kind"])
        loader = {
            ModelKind.LR: LinearParams,
            ModelKind.SVC: LinearParams,
            ModelKind.KNN: KNNParams,
            ModelKind.NB: NBParams,
        }.get(kind, TreeEnsemble)
        stats = FeatureStats.from_dict(d["stats"]) if d.get("stats") else None
        return cls(kind, d["hyper"], loader.from_dict(d["params"]), int(d["dim"]), float(d["decision_threshold"]), stats, d.get("space_digest", ""))


def save_model(model: TrainedModel, path) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Path(path).write_text(json.dumps(model.to_dict(), sort_keys=True) + "\n", encoding="utf-8")


def load_model(path) -> TrainedModel:
    return TrainedModel.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def canonical_order(X: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Row order that depends only on row contents, never on input order."""
    keys = np.column_stack([y[:, None], X])
    return np.lexsort(keys.T[::-1])


def _as_dense(X) -> np.ndarray:
    if isinstance(X, DesignMatrix):
        return X.to_dense()
    if isinstance(X, FeatureVector):
        return X.to_dense()[None, :]
    if sp.issparse(X):
        return X.toarray()
    arr = np.asarray(X, dtype=float)
    return arr[None, :] if arr.ndim == 1 else arr


def train(
    kind: Union[ModelKind, str],
    matrix,
    hyper: Optional[dict] = None,
    seed: int = 0,
    labels=None,
    binary_mask=None,
) -> TrainedModel:
    """Fit one classifier.

    ``matrix`` is a DesignMatrix, or a dense/sparse array with ``labels``.
    Rows are put in canonical order first, so the fit depends on the row
    multiset and the seed only.
    """
    kind = ModelKind(kind)
    hp = dict(DEFAULT_HYPER[kind])
    hp.update(hyper or {})
    if isinstance(matrix, DesignMatrix):
        X, y = matrix.to_dense(), matrix.labels
        binary_mask = matrix.space.binary_mask if binary_mask is None else binary_mask
        digest, names = matrix.space.digest(), matrix.space.names
    else:
        if labels is None:
            raise ValueError("labels are required with a raw feature array")
        X, y = _as_dense(matrix), np.asarray(labels, dtype=np.int64)
        digest, names = "", ()
    if X.shape[0] == 0 or X.shape[0] != y.shape[0]:
        raise DimensionError("training rows and labels must be non-empty and equal in length")
    if np.unique(y).size < 2:
        raise ValueError("training data must contain both classes")
    if binary_mask is not None and len(binary_mask) != X.shape[1]:
        raise DimensionError("binary mask does not match the feature dimension")

    order = canonical_order(X, y)
    X, y = X[order], y[order]
    stats = None
    if kind.standardizes:
        stats = compute_stats(X, binary_mask)
        X = standardize_array(X, stats)

    if kind is ModelKind.LR:
        params = fit_logistic(X, y, hp, seed)
    elif kind is ModelKind.SVC:
        params = fit_linear_svc(X, y, hp, seed)
    elif kind is ModelKind.KNN:
        params = fit_knn(X, y, hp, seed)
    elif kind is ModelKind.NB:
        params = fit_naive_bayes(X, y, hp, seed, binary_mask)
    elif kind is ModelKind.DT:
        params = fit_decision_tree(X, y, hp, seed)
    elif kind is ModelKind.RF:
        params = fit_random_forest(X, y, hp, seed)
    elif kind is ModelKind.ADABOOST:
        params = fit_adaboost(X, y, hp, seed)
    else:
        params = gbdt.fit_gbdt(X, y, GBDT_PRESET[kind], hp, seed)
    return TrainedModel(kind, hp, params, X.shape[1], 0.5, stats, digest, tuple(names))


def predict_scores(model: TrainedModel, X) -> np.ndarray:
    """Scores in [0, 1] for every row of ``X``."""
    X = _as_dense(X)
    if X.shape[1] != model.dim:
        raise DimensionError(f"model expects {model.dim} features, got {X.shape[1]}")
    if model.stats is not None:
        X = standardize_array(X, model.stats)
    p = model.params
    if isinstance(p, LinearParams):
        s = expit(p.margin(X))
    elif isinstance(p, (KNNParams, NBParams)):
        s = p.score(X)
    else:
        s = p.predict(X)
    return np.clip(s, 0.0, 1.0)


def predict_score(model: TrainedModel, x) -> float:
    return float(predict_scores(model, x)[0])


def predict_labels(model: TrainedModel, X) -> np.ndarray:
    """1 where score >= threshold (ties go positive)."""
    return (predict_scores(model, X) >= model.decision_threshold).astype(np.int64)


def predict_label(model: TrainedModel, x) -> int:
    return int(predict_labels(model, x)[0])

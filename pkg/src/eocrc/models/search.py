"""Random hyperparameter search scored by mean F1 over stratified folds."""

from __future__ import annotations

import math
from typing import Optional

import numpy as np

from ..features import DesignMatrix
from .base import ModelKind, predict_labels, train

# Each entry: ("choice", [values]) | ("int", lo, hi) inclusive | ("uniform", lo, hi) | ("loguniform", lo, hi)
DEFAULT_SEARCH_SPACES: dict[ModelKind, dict] = {
    ModelKind.LR: {"penalty": ("choice", ["l1", "l2"]), "strength": ("loguniform", 1e-4, 1.0)},
    ModelKind.KNN: {"k": ("int", 3, 51), "metric": ("choice", ["euclidean", "manhattan"])},
    ModelKind.NB: {"var_smoothing": ("loguniform", 1e-11, 1e-3)},
    ModelKind.SVC: {
        "penalty": ("choice", ["l1", "l2"]),
        "regularization": ("loguniform", 1e-4, 1e-1),
        "epochs": ("int", 5, 30),
    },
    ModelKind.DT: {"max_depth": ("int", 2, 12), "min_samples_leaf": ("int", 1, 20)},
    ModelKind.RF: {
        "n_trees": ("int", 20, 120),
        "max_depth": ("int", 3, 12),
        "min_samples_leaf": ("int", 1, 10),
        "feature_subsample": ("uniform", 0.1, 0.6),
    },
    ModelKind.ADABOOST: {"n_stumps": ("int", 20, 200), "learning_rate": ("loguniform", 0.05, 1.0)},
    ModelKind.LIGHTGBM: {
        "n_rounds": ("int", 30, 200),
        "learning_rate": ("loguniform", 0.02, 0.3),
        "max_leaves": ("int", 4, 31),
        "n_bins": ("choice", [32, 64, 128]),
    },
    ModelKind.HGB: {
        "n_rounds": ("int", 30, 200),
        "learning_rate": ("loguniform", 0.02, 0.3),
        "max_depth": ("int", 2, 6),
        "n_bins": ("choice", [32, 64, 128]),
    },
    ModelKind.XGBOOST: {
        "n_rounds": ("int", 30, 200),
        "learning_rate": ("loguniform", 0.02, 0.3),
        "max_depth": ("int", 2, 6),
        "l2": ("loguniform", 0.1, 10.0),
    },
}


def sample_candidate(space: dict, rng: np.random.Generator) -> dict:
    out = {}
    for name in sorted(space):
        spec = space[name]
        kind = spec[0]
        if kind == "choice":
            vals = list(spec[1])
            out[name] = vals[int(rng.integers(len(vals)))]
        elif kind == "int":
            out[name] = int(rng.integers(int(spec[1]), int(spec[2]) + 1))
        elif kind == "uniform":
            out[name] = float(rng.uniform(spec[1], spec[2]))
        elif kind == "loguniform":
            out[name] = float(math.exp(rng.uniform(math.log(spec[1]), math.log(spec[2]))))
        else:
            raise ValueError(f"unknown search dimension type {kind!r} for {name}")
    return out


def in_bounds(space: dict, candidate: dict) -> bool:
    for name, spec in space.items():
        v = candidate[name]
        if spec[0] == "choice":
            if v not in spec[1]:
                return False
        elif not spec[1] <= v <= spec[2]:
            return False
    return True


def stratified_folds(labels: np.ndarray, k: int, rng: np.random.Generator) -> list[np.ndarray]:
    """Test-index arrays; each class is shuffled and dealt round-robin across folds."""
    labels = np.asarray(labels)
    folds: list[list[int]] = [[] for _ in range(k)]
    offset = 0
    for cls in np.unique(labels):
        idx = np.flatnonzero(labels == cls)
        idx = idx[rng.permutation(idx.size)]
        for j, i in enumerate(idx):
            folds[(j + offset) % k].append(int(i))
        offset += idx.size
    return [np.sort(np.array(f, dtype=np.int64)) for f in folds]


def f1_score(labels, preds) -> float:
    labels = np.asarray(labels)
    preds = np.asarray(preds)
    tp = int(np.sum((labels == 1) & (preds == 1)))
    fp = int(np.sum((labels == 0) & (preds == 1)))
    fn = int(np.sum((labels == 1) & (preds == 0)))
    return 0.0 if tp == 0 else 2 * tp / (2 * tp + fp + fn)


def cross_val_f1(kind, matrix: DesignMatrix, hyper: dict, folds, seed: int) -> float:
    scores = []
    n = matrix.n_rows
    for test_idx in folds:
        mask = np.ones(n, dtype=bool)
        mask[test_idx] = False
        model = train(kind, matrix.subset(np.flatnonzero(mask)), hyper, seed)
        test = matrix.subset(test_idx)
        scores.append(f1_score(test.labels, predict_labels(model, test)))
    return float(np.mean(scores))


def random_search(
    kind,
    matrix: DesignMatrix,
    search_space: Optional[dict] = None,
    n_iters: int = 10,
    k_folds: int = 5,
    seed: int = 0,
) -> tuple[dict, float]:
    """Best (hyperparameters, mean CV F1); ties keep the earliest candidate."""
    kind = ModelKind(kind)
    if n_iters < 1:
        raise ValueError("n_iters must be >= 1")
    if k_folds < 2:
        raise ValueError("k_folds must be >= 2")
    space = DEFAULT_SEARCH_SPACES[kind] if search_space is None else search_space
    rng = np.random.default_rng(seed)
    cand_rng, fold_rng = (np.random.default_rng(s) for s in rng.integers(0, 2**63, size=2))
    folds = stratified_folds(matrix.labels, k_folds, fold_rng)
    best, best_f1 = None, -1.0
    for _ in range(n_iters):
        cand = sample_candidate(space, cand_rng)
        f1 = cross_val_f1(kind, matrix, cand, folds, seed)
        if f1 > best_f1:
            best, best_f1 = cand, f1
    return best, best_f1

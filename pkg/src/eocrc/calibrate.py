"""ROC construction and Youden-J threshold selection under a target prevalence."""

from __future__ import annotations

import json
import logging
import math
from dataclasses import asdict, dataclass, field
from typing import Callable, Optional

import numpy as np

from .features import DesignMatrix
from .models import ModelKind, predict_scores, stratified_folds, train

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class RocPoint:
    threshold: float
    tp: int
    tn: int
    n_pos: int
    n_neg: int

    @property
    def sensitivity(self) -> float:
        return self.tp / self.n_pos

    @property
    def specificity(self) -> float:
        return self.tn / self.n_neg

    @property
    def youden(self) -> float:
        return self.sensitivity + self.specificity - 1.0


@dataclass(frozen=True)
class RocCurve:
    """Points ordered by descending threshold; the first is the all-negative endpoint."""

    points: tuple[RocPoint, ...]
    auc: float

    def as_triples(self) -> list[tuple[float, float, float]]:
        return [(p.threshold, p.sensitivity, p.specificity) for p in self.points]


def roc_curve(scores, labels) -> RocCurve:
    """One point per distinct score (predict positive iff score >= threshold) plus +inf."""
    scores = np.asarray(scores, dtype=float)
    labels = np.asarray(labels).astype(np.int64)
    if scores.shape != labels.shape:
        raise ValueError("scores and labels differ in length")
    n_pos = int(labels.sum())
    n_neg = int(labels.size - n_pos)
    if n_pos == 0 or n_neg == 0:
        raise ValueError("ROC needs both classes")
    order = np.argsort(-scores, kind="stable")
    s, y = scores[order], labels[order]
    # Last index of each run of equal scores.
    ends = np.flatnonzero(np.r_[s[1:] != s[:-1], True])
    tp = np.cumsum(y)[ends]
    fp = (ends + 1) - tp
    points = [RocPoint(math.inf, 0, n_neg, n_pos, n_neg)]
    points += [RocPoint(float(s[e]), int(t), int(n_neg - f), n_pos, n_neg) for e, t, f in zip(ends, tp, fp)]
    fpr = np.r_[0.0, fp / n_neg]
    tpr = np.r_[0.0, tp / n_pos]
    auc = float(np.sum(np.diff(fpr) * (tpr[1:] + tpr[:-1]) / 2.0))
    return RocCurve(tuple(points), auc)


def youden_threshold(curve: RocCurve) -> tuple[float, float]:
    """(threshold, J) maximising J; equal J resolves to the smallest threshold.

    J is compared through the exact integer ``tp * n_neg + tn * n_pos``.
    """
    if not curve.points:
        raise ValueError("empty ROC curve")
    best = None
    best_key = None
    for p in curve.points:
        key = p.tp * p.n_neg + p.tn * p.n_pos
        if best_key is None or key > best_key or (key == best_key and p.threshold < best.threshold):
            best, best_key = p, key
    return best.threshold, best.youden


@dataclass
class ThresholdReport:
    per_fold_thresholds: list[float]
    per_fold_J: list[float]
    chosen_threshold: float
    skipped_folds: list[int] = field(default_factory=list)
    per_fold_sizes: list[tuple[int, int]] = field(default_factory=list)

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=1)

    @classmethod
    def from_dict(cls, d: dict) -> "ThresholdReport":
        return cls(
            list(d["per_fold_thresholds"]),
            list(d["per_fold_J"]),
            float(d["chosen_threshold"]),
            list(d.get("skipped_folds", [])),
            [tuple(x) for x in d.get("per_fold_sizes", [])],
        )


Scorer = Callable[[DesignMatrix], np.ndarray]
FitFn = Callable[[DesignMatrix, int], Scorer]


def model_fitter(kind, hyper: Optional[dict]) -> FitFn:
    def fit(m: DesignMatrix, seed: int) -> Scorer:
        model = train(ModelKind(kind), m, hyper, seed)
        return lambda v: predict_scores(model, v)

    return fit


def cv_threshold(
    kind,
    hyper: Optional[dict],
    matrix: DesignMatrix,
    k: int = 10,
    target_prevalence: float = 0.01,
    seed: int = 0,
    negative_pool: Optional[DesignMatrix] = None,
    fit: Optional[FitFn] = None,
) -> ThresholdReport:
    """Mean of per-fold Youden thresholds.

    Each fold trains on the other folds of the balanced matrix. Its validation
    set holds the fold's negatives plus a disjoint slice of ``negative_pool``,
    and just enough of the fold's positives to hit ``target_prevalence``.
    """
    if not 0.0 < target_prevalence < 1.0:
        raise ValueError("target_prevalence must lie in (0, 1)")
    fit = fit or model_fitter(kind, hyper)
    rng = np.random.default_rng(seed)
    fold_rng, pos_rng, pool_rng = (np.random.default_rng(s) for s in rng.integers(0, 2**63, size=3))
    folds = stratified_folds(matrix.labels, k, fold_rng)
    pool_chunks: list[np.ndarray] = [np.zeros(0, dtype=np.int64)] * k
    if negative_pool is not None and negative_pool.n_rows:
        neg_idx = np.flatnonzero(negative_pool.labels == 0)
        pool_chunks = np.array_split(neg_idx[pool_rng.permutation(neg_idx.size)], k)

    thresholds, js, skipped, sizes = [], [], [], []
    n = matrix.n_rows
    for f, test_idx in enumerate(folds):
        mask = np.ones(n, dtype=bool)
        mask[test_idx] = False
        train_m = matrix.subset(np.flatnonzero(mask))
        fold = matrix.subset(test_idx)
        pos = np.flatnonzero(fold.labels == 1)
        neg = np.flatnonzero(fold.labels == 0)
        n_neg = neg.size + pool_chunks[f].size
        want = int(round(n_neg * target_prevalence / (1.0 - target_prevalence)))
        n_take = min(max(want, 1), pos.size)
        if n_take == 0 or n_neg == 0 or np.unique(train_m.labels).size < 2:
            log.warning("fold %d skipped: validation or training set lacks a class", f)
            skipped.append(f)
            continue
        take = np.sort(pos_rng.choice(pos, size=n_take, replace=False))
        parts = [fold.subset(np.r_[take, neg])]
        if pool_chunks[f].size:
            parts.append(negative_pool.subset(pool_chunks[f]))
        val = DesignMatrix.stack(parts)
        scorer = fit(train_m, seed + f)
        thr, j = youden_threshold(roc_curve(scorer(val), val.labels))
        thresholds.append(min(thr, 1.0))
        js.append(j)
        sizes.append((int(n_take), int(n_neg)))
    if not thresholds:
        raise ValueError("every fold was skipped; cannot choose a threshold")
    chosen = float(np.mean(thresholds))
    chosen = min(max(chosen, min(thresholds)), max(thresholds))
    return ThresholdReport(thresholds, js, chosen, skipped, sizes)

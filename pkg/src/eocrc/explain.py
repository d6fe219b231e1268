"""Gain importance for tree ensembles and interventional Shapley attributions.

The value of a coalition S is the model's mean probability over background
rows with the features in S replaced by the explained row's values.
"""

from __future__ import annotations

import csv
import io
import itertools
import json
import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
import scipy.sparse as sp

from .errors import DimensionError
from .features import DesignMatrix, FeatureVector
from .models import TrainedModel, TreeEnsemble, predict_score, predict_scores

OTHER = "other features"


@dataclass(frozen=True)
class ImportanceTable:
    entries: tuple[tuple[str, float], ...]

    def top(self, k: int) -> list[tuple[str, float]]:
        return list(self.entries[:k])


def gain_importance(ensemble: TreeEnsemble, names: Optional[Sequence[str]] = None) -> ImportanceTable:
    """Mean recorded split gain per feature, descending; unsplit features are omitted."""
    sums: dict[int, float] = {}
    counts: dict[int, int] = {}
    for f, g in ensemble.splits():
        sums[f] = sums.get(f, 0.0) + g
        counts[f] = counts.get(f, 0) + 1
    means = sorted(((f, sums[f] / counts[f]) for f in sums), key=lambda t: (-t[1], t[0]))
    label = (lambda f: names[f]) if names is not None else str
    return ImportanceTable(tuple((label(f), float(v)) for f, v in means))


def _dense_rows(rows) -> np.ndarray:
    if isinstance(rows, DesignMatrix):
        return rows.to_dense()
    if sp.issparse(rows):
        return rows.toarray()
    if isinstance(rows, FeatureVector):
        return rows.to_dense()[None, :]
    if isinstance(rows, (list, tuple)) and rows and isinstance(rows[0], FeatureVector):
        return np.vstack([r.to_dense() for r in rows])
    arr = np.asarray(rows, dtype=float)
    return arr[None, :] if arr.ndim == 1 else arr


def _dense_vec(x) -> np.ndarray:
    if isinstance(x, FeatureVector):
        return x.to_dense()
    return np.asarray(x, dtype=float).ravel()


@dataclass(frozen=True)
class BackgroundSet:
    rows: np.ndarray

    def __post_init__(self):
        rows = _dense_rows(self.rows)
        if rows.shape[0] == 0:
            raise ValueError("background set is empty")
        object.__setattr__(self, "rows", rows)

    @classmethod
    def sample(cls, matrix: DesignMatrix, size: int = 32, seed: int = 0) -> "BackgroundSet":
        rng = np.random.default_rng(seed)
        n = matrix.n_rows
        idx = np.sort(rng.choice(n, size=min(size, n), replace=False))
        return cls(matrix.subset(idx).to_dense())


@dataclass(frozen=True)
class ShapExplanation:
    base_value: float
    contributions: np.ndarray
    prediction: float
    exact: bool = True
    std_error: Optional[np.ndarray] = None
    n_samples: int = 0

    def to_dict(self, names: Optional[Sequence[str]] = None) -> dict:
        nz = np.flatnonzero(self.contributions)
        label = (lambda f: names[f]) if names is not None else str
        d = {
            "base_value": self.base_value,
            "prediction": self.prediction,
            "exact": self.exact,
            "contributions": {label(int(f)): float(self.contributions[f]) for f in nz},
        }
        if self.std_error is not None:
            d["std_error"] = {label(int(f)): float(self.std_error[f]) for f in nz}
            d["n_samples"] = self.n_samples
        return d


def _check(model: TrainedModel, x: np.ndarray, bg: BackgroundSet):
    if x.shape[0] != model.dim or bg.rows.shape[1] != model.dim:
        raise DimensionError(f"model expects {model.dim} features")


def _exact(model, x, bg, active) -> np.ndarray:
    B = bg.rows.shape[0]
    M = active.size
    masks = ((np.arange(1 << M)[:, None] >> np.arange(M)[None, :]) & 1).astype(bool)
    values = np.empty(1 << M)
    chunk = max(1, 200_000 // max(1, B * model.dim))
    for s in range(0, 1 << M, chunk):
        m = masks[s : s + chunk]
        rows = np.repeat(bg.rows[None, :, :], m.shape[0], axis=0)
        cols = np.where(m[:, None, :], x[active][None, None, :], rows[:, :, active])
        rows[:, :, active] = cols
        values[s : s + chunk] = predict_scores(model, rows.reshape(-1, model.dim)).reshape(m.shape[0], B).mean(axis=1)
    size = masks.sum(axis=1)
    weight = np.array([math.factorial(k) * math.factorial(M - k - 1) / math.factorial(M) for k in range(M)])
    phi = np.zeros(M)
    idx = np.arange(1 << M)
    for i in range(M):
        without = idx[~masks[:, i]]
        phi[i] = np.sum(weight[size[without]] * (values[without | (1 << i)] - values[without]))
    return phi


def _sampled(model, x, bg, active, n_samples, rng):
    """Permutation estimates, stratified so every background row is used equally often."""
    B = bg.rows.shape[0]
    per_row = max(1, int(math.ceil(n_samples / B)))
    total = per_row * B
    pos = {f: k for k, f in enumerate(active)}
    draws = np.zeros((total, active.size))
    s = 0
    for b in range(B):
        base = bg.rows[b]
        differs = active[x[active] != base[active]]
        for _ in range(per_row):
            if differs.size:
                perm = differs[rng.permutation(differs.size)]
                chain = np.repeat(base[None, :], perm.size + 1, axis=0)
                for k, f in enumerate(perm):
                    chain[k + 1 :, f] = x[f]
                out = predict_scores(model, chain)
                d = np.diff(out)
                for k, f in enumerate(perm):
                    draws[s, pos[f]] = d[k]
            s += 1
    phi = draws.mean(axis=0)
    se = draws.std(axis=0, ddof=1) / math.sqrt(total) if total > 1 else np.zeros(active.size)
    return phi, se, total


def shap_values(
    model: TrainedModel,
    x,
    background: BackgroundSet,
    max_exact_features: int = 12,
    n_samples: int = 512,
    seed: int = 0,
) -> ShapExplanation:
    """Interventional Shapley values of ``predict_score``.

    Features equal to ``x`` in every background row are null players and get
    zero. Exact subset enumeration runs when at most ``max_exact_features``
    others remain; otherwise a seeded permutation estimate with standard
    errors is returned.
    """
    if not isinstance(background, BackgroundSet):
        background = BackgroundSet(background)
    xv = _dense_vec(x)
    _check(model, xv, background)
    active = np.flatnonzero(np.any(background.rows != xv[None, :], axis=0))
    base_value = float(predict_scores(model, background.rows).mean())
    prediction = predict_score(model, xv)
    phi_full = np.zeros(model.dim)
    if active.size == 0:
        return ShapExplanation(base_value, phi_full, prediction)
    if active.size <= max_exact_features:
        phi_full[active] = _exact(model, xv, background, active)
        return ShapExplanation(base_value, phi_full, prediction)
    phi, se, total = _sampled(model, xv, background, active, n_samples, np.random.default_rng(seed))
    phi_full[active] = phi
    se_full = np.zeros(model.dim)
    se_full[active] = se
    return ShapExplanation(base_value, phi_full, prediction, exact=False, std_error=se_full, n_samples=total)


def brute_force_shapley(model: TrainedModel, x, background, max_features: int = 12, max_background: int = 64) -> np.ndarray:
    """Textbook subset-enumeration Shapley values (test oracle; small inputs only)."""
    xv = _dense_vec(x)
    bg = _dense_rows(background.rows if isinstance(background, BackgroundSet) else background)
    M = xv.shape[0]
    if M > max_features:
        raise ValueError(f"{M} features exceeds the brute-force bound of {max_features}")
    if bg.shape[0] > max_background:
        raise ValueError(f"{bg.shape[0]} background rows exceeds the bound of {max_background}")
    cache: dict[frozenset, float] = {}

    def value(S: frozenset) -> float:
        if S not in cache:
            z = bg.copy()
            for j in S:
                z[:, j] = xv[j]
            cache[S] = float(np.mean(predict_scores(model, z)))
        return cache[S]

    phi = np.zeros(M)
    for i in range(M):
        others = [j for j in range(M) if j != i]
        for size in range(M):
            w = math.factorial(size) * math.factorial(M - size - 1) / math.factorial(M)
            for S in itertools.combinations(others, size):
                S = frozenset(S)
                phi[i] += w * (value(S | {i}) - value(S))
    return phi


def export_waterfall(explanation: ShapExplanation, top_k: int, names: Optional[Sequence[str]] = None) -> list[dict]:
    """Largest-magnitude contributions first, the rest folded into one row.

    The final cumulative value equals ``prediction - base_value``.
    """
    c = explanation.contributions
    nz = np.flatnonzero(c)
    order = nz[np.lexsort((nz, -np.abs(c[nz])))]
    shown, rest = order[:top_k], order[top_k:]
    label = (lambda f: names[f]) if names is not None else str
    records = []
    cum = 0.0
    for f in shown:
        cum += float(c[f])
        records.append({"feature": label(int(f)), "contribution": float(c[f]), "cumulative": cum})
    if rest.size or not records:
        other = float(c[rest].sum()) if rest.size else 0.0
        cum += other
        records.append({"feature": OTHER, "contribution": other, "cumulative": cum})
    return records


def importance_csv(table: ImportanceTable) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["feature", "importance"])
    for name, v in table.entries:
        w.writerow([name, repr(v)])
    return buf.getvalue()


def waterfall_csv(records: list[dict]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["feature", "contribution", "cumulative"])
    for r in records:
        w.writerow([r["feature"], repr(r["contribution"]), repr(r["cumulative"])])
    return buf.getvalue()


def to_json(obj) -> str:
    if isinstance(obj, ImportanceTable):
        obj = [{"feature": n, "importance": v} for n, v in obj.entries]
    return json.dumps(obj, sort_keys=True, indent=1) + "\n"

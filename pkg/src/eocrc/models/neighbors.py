"""Brute-force k-nearest-neighbours and a Gaussian/Bernoulli naive Bayes."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import expit


@dataclass
class KNNParams:
    X: np.ndarray
    y: np.ndarray
    k: int
    metric: str

    def score(self, Q: np.ndarray) -> np.ndarray:
        k = min(self.k, self.X.shape[0])
        chunk = max(1, int(4_000_000 // max(1, self.X.size)))
        out = np.empty(Q.shape[0])
        for s in range(0, Q.shape[0], chunk):
            q = Q[s : s + chunk]
            if self.metric == "manhattan":
                dist = np.abs(q[:, None, :] - self.X[None, :, :]).sum(axis=2)
            else:
                dist = ((q[:, None, :] - self.X[None, :, :]) ** 2).sum(axis=2)
            # Stable sort: equal distances resolve to the earlier (canonical) training row.
            nn = np.argsort(dist, axis=1, kind="stable")[:, :k]
            out[s : s + chunk] = self.y[nn].mean(axis=1)
        return out

    def to_dict(self) -> dict:
        return {"X": self.X.tolist(), "y": self.y.tolist(), "k": self.k, "metric": self.metric}

    @classmethod
    def from_dict(cls, d: dict) -> "KNNParams":
        return cls(np.array(d["X"], dtype=float).reshape(len(d["y"]), -1), np.array(d["y"], dtype=float), int(d["k"]), d["metric"])


def fit_knn(X: np.ndarray, y: np.ndarray, hyper: dict, seed: int = 0) -> KNNParams:
    return KNNParams(X.copy(), y.astype(float), int(hyper.get("k", 15)), str(hyper.get("metric", "euclidean")))


@dataclass
class NBParams:
    log_prior: np.ndarray  # (2,)
    mean: np.ndarray  # (2, d) Gaussian columns
    var: np.ndarray  # (2, d)
    p_on: np.ndarray  # (2, d) Bernoulli columns
    binary: np.ndarray  # (d,) bool

    def log_odds(self, X: np.ndarray) -> np.ndarray:
        c = ~self.binary
        out = np.full(X.shape[0], self.log_prior[1] - self.log_prior[0])
        if c.any():
            xc = X[:, c]
            for cls, sign in ((1, 1.0), (0, -1.0)):
                m, v = self.mean[cls, c], self.var[cls, c]
                ll = -0.5 * (np.log(2 * np.pi * v) + (xc - m) ** 2 / v)
                out += sign * ll.sum(axis=1)
        if self.binary.any():
            xb = X[:, self.binary] > 0.5
            for cls, sign in ((1, 1.0), (0, -1.0)):
                p = self.p_on[cls, self.binary]
                ll = np.where(xb, np.log(p), np.log1p(-p))
                out += sign * ll.sum(axis=1)
        return out

    def score(self, X: np.ndarray) -> np.ndarray:
        return expit(self.log_odds(X))

    def to_dict(self) -> dict:
        return {k: getattr(self, k).tolist() for k in ("log_prior", "mean", "var", "p_on", "binary")}

    @classmethod
    def from_dict(cls, d: dict) -> "NBParams":
        return cls(
            np.array(d["log_prior"], dtype=float),
            np.array(d["mean"], dtype=float),
            np.array(d["var"], dtype=float),
            np.array(d["p_on"], dtype=float),
            np.array(d["binary"], dtype=bool),
        )


def fit_naive_bayes(X: np.ndarray, y: np.ndarray, hyper: dict, seed: int = 0, binary_mask=None) -> NBParams:
    """Gaussian likelihoods for continuous columns, Laplace-smoothed Bernoulli for one-hots.

    Variances get ``var_smoothing * max(column variance)`` added.
    """
    smoothing = float(hyper.get("var_smoothing", 1e-9))
    d = X.shape[1]
    binary = np.zeros(d, dtype=bool) if binary_mask is None else np.asarray(binary_mask, dtype=bool)
    eps = smoothing * max(float(X.var(axis=0).max()) if d else 0.0, 1e-12)
    mean = np.zeros((2, d))
    var = np.ones((2, d))
    p_on = np.full((2, d), 0.5)
    prior = np.zeros(2)
    for cls in (0, 1):
        Xc = X[y == cls]
        prior[cls] = Xc.shape[0] / X.shape[0]
        mean[cls] = Xc.mean(axis=0)
        var[cls] = Xc.var(axis=0) + eps
        p_on[cls] = ((Xc > 0.5).sum(axis=0) + 1.0) / (Xc.shape[0] + 2.0)
    return NBParams(np.log(prior), mean, var, p_on, binary)

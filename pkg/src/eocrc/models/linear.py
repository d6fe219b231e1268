"""Penalised logistic regression (FISTA) and a linear hinge-loss SVC (SGD)."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import expit


@dataclass
class LinearParams:
    weights: np.ndarray
    bias: float

    def margin(self, X: np.ndarray) -> np.ndarray:
        return X @ self.weights + self.bias

    def to_dict(self) -> dict:
        return {"weights": self.weights.tolist(), "bias": self.bias}

    @classmethod
    def from_dict(cls, d: dict) -> "LinearParams":
        return cls(np.array(d["weights"], dtype=float), float(d["bias"]))


def _soft_threshold(v: np.ndarray, t: float) -> np.ndarray:
    return np.sign(v) * np.maximum(np.abs(v) - t, 0.0)


def fit_logistic(X: np.ndarray, y: np.ndarray, hyper: dict, seed: int = 0) -> LinearParams:
    """Minimise mean log-loss + strength * penalty with accelerated proximal gradient.

    ``penalty`` is "l1" (lasso) or "l2" (0.5 * ||w||^2); the intercept is unpenalised.
    """
    penalty = str(hyper.get("penalty", "l2")).lower()
    lam = float(hyper.get("strength", 0.01))
    max_iter = int(hyper.get("max_iter", 1000))
    tol = float(hyper.get("tol", 1e-7))
    n, d = X.shape
    y = y.astype(float)
    Xa = np.hstack([X, np.ones((n, 1))])
    lip = 0.25 * np.linalg.norm(Xa, 2) ** 2 / n + (lam if penalty == "l2" else 0.0)
    step = 1.0 / max(lip, 1e-12)

    theta = np.zeros(d + 1)
    z = theta.copy()
    t = 1.0
    for _ in range(max_iter):
        grad = Xa.T @ (expit(Xa @ z) - y) / n
        if penalty == "l2":
            grad[:d] += lam * z[:d]
        nxt = z - step * grad
        if penalty == "l1":
            nxt[:d] = _soft_threshold(nxt[:d], step * lam)
        t_next = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t * t))
        z = nxt + ((t - 1.0) / t_next) * (nxt - theta)
        delta = np.max(np.abs(nxt - theta))
        theta, t = nxt, t_next
        if delta < tol * max(1.0, np.max(np.abs(theta))):
            break
    return LinearParams(theta[:d].copy(), float(theta[d]))


def fit_linear_svc(X: np.ndarray, y: np.ndarray, hyper: dict, seed: int = 0) -> LinearParams:
    """Hinge loss + strength * penalty by stochastic subgradient descent.

    L2 uses the Pegasos step 1/(lambda t); L1 uses a 1/sqrt(t) step with a
    soft-threshold after each update. Returns the average of all iterates.
    """
    penalty = str(hyper.get("penalty", "l2")).lower()
    lam = float(hyper.get("regularization", 1e-3))
    epochs = int(hyper.get("epochs", 20))
    eta0 = float(hyper.get("eta0", 0.1))
    rng = np.random.default_rng(seed)
    n, d = X.shape
    ys = np.where(y > 0, 1.0, -1.0)
    w = np.zeros(d)
    b = 0.0
    w_sum = np.zeros(d)
    b_sum = 0.0
    step_no = 0
    for _ in range(epochs):
        for i in rng.permutation(n):
            step_no += 1
            eta = 1.0 / (lam * (step_no + 1.0 / (lam * eta0))) if penalty == "l2" else eta0 / np.sqrt(step_no)
            active = ys[i] * (X[i] @ w + b) < 1.0
            if penalty == "l2":
                w *= 1.0 - eta * lam
            if active:
                w += eta * ys[i] * X[i]
                b += eta * ys[i]
            if penalty == "l1":
                w = _soft_threshold(w, eta * lam)
            w_sum += w
            b_sum += b
    return LinearParams(w_sum / max(step_no, 1), b_sum / max(step_no, 1))

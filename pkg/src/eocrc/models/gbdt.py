"""Histogram gradient boosting for binary log-loss.

One engine backs three presets that differ in growth policy, use of the
loss curvature, and L2 on leaf weights:

* ``lightgbm``: leaf-wise (best-first) growth bounded by ``max_leaves``
* ``hgb``: depth-wise growth, gradient-only gains (unit hessians)
* ``xgboost``: depth-wise growth, Newton gains with L2 ``l2``
"""

from __future__ import annotations

import heapq

import numpy as np
from scipy.special import expit

from .trees import TreeEnsemble, _TreeBuilder

PRESETS = {
    "lightgbm": {"growth": "leafwise", "max_leaves": 31, "max_depth": -1, "use_hessian": True, "l2": 0.0},
    "hgb": {"growth": "depthwise", "max_leaves": 0, "max_depth": 3, "use_hessian": False, "l2": 0.0},
    "xgboost": {"growth": "depthwise", "max_leaves": 0, "max_depth": 4, "use_hessian": True, "l2": 1.0},
}

DEFAULTS = {"n_rounds": 100, "learning_rate": 0.1, "n_bins": 64, "min_samples_leaf": 5, "min_hessian": 1e-3}


def log_loss(y: np.ndarray, raw: np.ndarray) -> float:
    # log(1 + e^r) - y r, computed stably.
    return float(np.mean(np.logaddexp(0.0, raw) - y * raw))


class Binner:
    """Per-feature cut points taken from training values.

    ``bin(x) = #{cuts < x}``, so ``bin(x) <= b`` iff ``x <= cuts[b]``.
    """

    def __init__(self, X: np.ndarray, n_bins: int):
        self.cuts = []
        for j in range(X.shape[1]):
            u = np.unique(X[:, j])[:-1]  # splitting above the max is useless
            if u.size > n_bins - 1:
                pick = np.unique(np.linspace(0, u.size - 1, n_bins - 1).round().astype(np.int64))
                u = u[pick]
            self.cuts.append(u)
        self.n_bins = max(2, max((c.size + 1 for c in self.cuts), default=2))

    def transform(self, X: np.ndarray) -> np.ndarray:
        out = np.empty(X.shape, dtype=np.int64)
        for j, c in enumerate(self.cuts):
            out[:, j] = np.searchsorted(c, X[:, j], side="left")
        return out


class _Grower:
    def __init__(self, Xb, binner, g, h, hp):
        self.Xb, self.binner, self.g, self.h = Xb, binner, g, h
        self.lam = float(hp["l2"])
        self.min_leaf = int(hp["min_samples_leaf"])
        self.min_hess = float(hp["min_hessian"])
        self.lr = float(hp["learning_rate"])
        n_feat = Xb.shape[1]
        self.B = binner.n_bins
        self.offsets = (np.arange(n_feat) * self.B)[None, :]
        self.n_cuts = np.array([c.size for c in binner.cuts])

    def leaf_value(self, rows) -> float:
        return -self.lr * self.g[rows].sum() / (self.h[rows].sum() + self.lam)

    def best_split(self, rows):
        """(gain, feature, bin) maximising the second-order gain, or None."""
        if rows.size < 2 * self.min_leaf:
            return None
        flat = (self.Xb[rows] + self.offsets).ravel()
        size = self.offsets.size * self.B
        G = np.bincount(flat, weights=np.repeat(self.g[rows], self.Xb.shape[1]), minlength=size)
        H = np.bincount(flat, weights=np.repeat(self.h[rows], self.Xb.shape[1]), minlength=size)
        C = np.bincount(flat, minlength=size)
        shape = (self.Xb.shape[1], self.B)
        GL = np.cumsum(G.reshape(shape), axis=1)
        HL = np.cumsum(H.reshape(shape), axis=1)
        CL = np.cumsum(C.reshape(shape), axis=1)
        Gt, Ht, Ct = GL[0, -1], HL[0, -1], CL[0, -1]
        GR, HR, CR = Gt - GL, Ht - HL, Ct - CL
        lam = self.lam
        with np.errstate(divide="ignore", invalid="ignore"):
            gain = 0.5 * (GL**2 / (HL + lam) + GR**2 / (HR + lam) - Gt**2 / (Ht + lam))
        bins = np.arange(self.B)[None, :]
        valid = (
            (bins < self.n_cuts[:, None])
            & (CL >= self.min_leaf)
            & (CR >= self.min_leaf)
            & (HL >= self.min_hess)
            & (HR >= self.min_hess)
        )
        gain = np.where(valid & np.isfinite(gain), gain, -np.inf)
        f, b = divmod(int(np.argmax(gain)), self.B)
        best = gain[f, b]
        if not np.isfinite(best) or best <= 1e-12:
            return None
        return float(best), int(f), int(b)

    def split_rows(self, rows, f, b):
        go_left = self.Xb[rows, f] <= b
        return rows[go_left], rows[~go_left]

    def grow(self, growth: str, max_depth: int, max_leaves: int):
        tb = _TreeBuilder()
        n = self.Xb.shape[0]
        root_rows = np.arange(n)
        root = tb.add_leaf(self.leaf_value(root_rows))
        depth_ok = (lambda d: True) if max_depth is None or max_depth < 0 else (lambda d: d < max_depth)

        def apply_split(node, rows, split):
            gain, f, b = split
            lrows, rrows = self.split_rows(rows, f, b)
            left = tb.add_leaf(self.leaf_value(lrows))
            right = tb.add_leaf(self.leaf_value(rrows))
            tb.make_split(node, f, float(self.binner.cuts[f][b]), gain, left, right)
            return (left, lrows), (right, rrows)

        if growth == "leafwise":
            limit = max_leaves if max_leaves and max_leaves > 1 else 31
            heap, counter, n_leaves = [], 0, 1
            s = self.best_split(root_rows) if depth_ok(0) else None
            if s is not None:
                heapq.heappush(heap, (-s[0], counter, root, root_rows, 0, s))
            while heap and n_leaves < limit:
                _, _, node, rows, depth, s = heapq.heappop(heap)
                for child, crows in apply_split(node, rows, s):
                    counter += 1
                    cs = self.best_split(crows) if depth_ok(depth + 1) else None
                    if cs is not None:
                        heapq.heappush(heap, (-cs[0], counter, child, crows, depth + 1, cs))
                n_leaves += 1
        else:
            frontier = [(root, root_rows)]
            depth = 0
            while frontier and depth_ok(depth):
                nxt = []
                for node, rows in frontier:
                    s = self.best_split(rows)
                    if s is not None:
                        nxt.extend(apply_split(node, rows, s))
                frontier = nxt
                depth += 1
        return tb.build()


def resolve_hyper(preset: str, hyper: dict) -> dict:
    hp = dict(DEFAULTS)
    hp.update(PRESETS[preset])
    hp.update(hyper)
    return hp


def fit_gbdt(X: np.ndarray, y: np.ndarray, preset: str, hyper: dict, seed: int) -> TreeEnsemble:
    hp = resolve_hyper(preset, hyper)
    y = y.astype(float)
    p0 = float(np.clip(y.mean(), 1e-12, 1 - 1e-12))
    base = float(np.log(p0 / (1 - p0)))
    binner = Binner(X, int(hp["n_bins"]))
    Xb = binner.transform(X)
    raw = np.full(X.shape[0], base)
    trees = []
    losses = [log_loss(y, raw)]
    for _ in range(int(hp["n_rounds"])):
        p = expit(raw)
        g = p - y
        h = p * (1 - p) if hp["use_hessian"] else np.ones_like(p)
        grower = _Grower(Xb, binner, g, h, hp)
        tree = grower.grow(hp["growth"], int(hp["max_depth"]), int(hp["max_leaves"]))
        if tree.n_nodes == 1 and abs(tree.value[0]) < 1e-15:
            break
        trees.append(tree)
        raw = raw + tree.predict(X)
        losses.append(log_loss(y, raw))
    return TreeEnsemble(trees, base_score=base, aggregate="sum", link="logistic", scale=1.0, train_loss=losses)

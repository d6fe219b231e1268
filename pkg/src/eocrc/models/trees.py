"""Binary trees stored as flat arrays, CART growth, forests and AdaBoost stumps.

Split rule everywhere: go left iff ``x[feature] <= threshold``, where the
threshold is the largest training value sent left. Thresholds are therefore
actual data values, which keeps predictions invariant under strictly
monotone feature transforms.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit

LEAF = -1
_EPS_GAIN = 1e-12


@dataclass
class Tree:
    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray
    gain: np.ndarray

    @property
    def n_nodes(self) -> int:
        return int(self.feature.shape[0])

    def is_leaf(self, i: int) -> bool:
        return self.left[i] == LEAF

    def apply(self, X: np.ndarray) -> np.ndarray:
        """Leaf index reached by every row."""
        node = np.zeros(X.shape[0], dtype=np.int64)
        active = self.left[node] != LEAF
        while np.any(active):
            rows = np.flatnonzero(active)
            cur = node[rows]
            go_left = X[rows, self.feature[cur]] <= self.threshold[cur]
            node[rows] = np.where(go_left, self.left[cur], self.right[cur])
            active[rows] = self.left[node[rows]] != LEAF
        return node

    def predict(self, X: np.ndarray) -> np.ndarray:
        return self.value[self.apply(X)]

    def splits(self):
        """(feature, gain) for every internal node."""
        internal = np.flatnonzero(self.left != LEAF)
        return [(int(self.feature[i]), float(self.gain[i])) for i in internal]

    def to_dict(self) -> dict:
        return {
            "feature": self.feature.tolist(),
            "threshold": self.threshold.tolist(),
            "left": self.left.tolist(),
            "right": self.right.tolist(),
            "value": self.value.tolist(),
            "gain": self.gain.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Tree":
        return cls(
            np.array(d["feature"], dtype=np.int64),
            np.array(d["threshold"], dtype=float),
            np.array(d["left"], dtype=np.int64),
            np.array(d["right"], dtype=np.int64),
            np.array(d["value"], dtype=float),
            np.array(d["gain"], dtype=float),
        )


class _TreeBuilder:
    """Append-only node storage used while growing."""

    def __init__(self):
        self.feature, self.threshold, self.left, self.right, self.value, self.gain = [], [], [], [], [], []

    def add_leaf(self, value: float) -> int:
        self.feature.append(0)
        self.threshold.append(0.0)
        self.left.append(LEAF)
        self.right.append(LEAF)
        self.value.append(float(value))
        self.gain.append(0.0)
        return len(self.value) - 1

    def make_split(self, node: int, feature: int, threshold: float, gain: float, left: int, right: int):
        self.feature[node] = int(feature)
        self.threshold[node] = float(threshold)
        self.gain[node] = float(gain)
        self.left[node] = left
        self.right[node] = right

    def build(self) -> Tree:
        return Tree(
            np.array(self.feature, dtype=np.int64),
            np.array(self.threshold, dtype=float),
            np.array(self.left, dtype=np.int64),
            np.array(self.right, dtype=np.int64),
            np.array(self.value, dtype=float),
            np.array(self.gain, dtype=float),
        )


@dataclass
class TreeEnsemble:
    """Raw output ``base_score + scale * agg(tree outputs)`` passed through ``link``."""

    trees: list[Tree]
    base_score: float = 0.0
    aggregate: str = "sum"  # "sum" or "mean"
    link: str = "identity"  # "identity" or "logistic"
    scale: float = 1.0
    train_loss: list[float] = field(default_factory=list)

    def raw(self, X: np.ndarray) -> np.ndarray:
        out = np.zeros(X.shape[0])
        for t in self.trees:
            out += t.predict(X)
        if self.aggregate == "mean" and self.trees:
            out /= len(self.trees)
        return self.base_score + self.scale * out

    def predict(self, X: np.ndarray) -> np.ndarray:
        r = self.raw(X)
        return expit(r) if self.link == "logistic" else np.clip(r, 0.0, 1.0)

    def splits(self):
        return [s for t in self.trees for s in t.splits()]

    def to_dict(self) -> dict:
        return {
            "trees": [t.to_dict() for t in self.trees],
            "base_score": self.base_score,
            "aggregate": self.aggregate,
            "link": self.link,
            "scale": self.scale,
            "train_loss": list(self.train_loss),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TreeEnsemble":
        return cls(
            [Tree.from_dict(t) for t in d["trees"]],
            float(d["base_score"]),
            d["aggregate"],
            d["link"],
            float(d["scale"]),
            list(d.get("train_loss", [])),
        )


def _gini_best_split(X: np.ndarray, y: np.ndarray, features: np.ndarray, min_leaf: int):
    """Best (gain, feature, threshold) by weighted Gini decrease over ``features``."""
    n = y.shape[0]
    Xf = X[:, features]
    order = np.argsort(Xf, axis=0, kind="stable")
    xs = np.take_along_axis(Xf, order, axis=0)
    ys = y[order]
    n_left = np.arange(1, n, dtype=float)[:, None]
    n_right = n - n_left
    pos_left = np.cumsum(ys, axis=0)[:-1]
    pos_total = ys.sum(axis=0)[None, :]
    pos_right = pos_total - pos_left
    gini_left = 1.0 - (pos_left / n_left) ** 2 - (1.0 - pos_left / n_left) ** 2
    gini_right = 1.0 - (pos_right / n_right) ** 2 - (1.0 - pos_right / n_right) ** 2
    p = pos_total / n
    parent = n * (1.0 - p**2 - (1.0 - p) ** 2)
    gain = parent - n_left * gini_left - n_right * gini_right
    valid = (xs[:-1] < xs[1:]) & (n_left >= min_leaf) & (n_right >= min_leaf)
    gain = np.where(valid, gain, -np.inf)
    # Column-major argmax: lowest feature first, then lowest threshold.
    flat = int(np.argmax(gain.T))
    j, i = divmod(flat, n - 1)
    best = gain[i, j]
    if not np.isfinite(best) or best <= _EPS_GAIN:
        return None
    return float(best), int(features[j]), float(xs[i, j])


def grow_cart(
    X: np.ndarray,
    y: np.ndarray,
    max_depth: int = 8,
    min_samples_leaf: int = 1,
    feature_subsample: float = 1.0,
    rng: np.random.Generator | None = None,
) -> Tree:
    """Depth-first CART classifier; leaves hold the positive fraction.

    Gains are Gini decreases weighted by node size relative to the root.
    """
    n_root, n_feat = X.shape
    n_try = max(1, int(round(feature_subsample * n_feat)))
    b = _TreeBuilder()
    root = b.add_leaf(y.mean())
    stack = [(root, np.arange(n_root), 0)]
    while stack:
        node, rows, depth = stack.pop()
        yn = y[rows]
        if depth >= max_depth or rows.size < 2 * min_samples_leaf or yn.min() == yn.max():
            continue
        if n_try < n_feat:
            feats = np.sort(rng.choice(n_feat, size=n_try, replace=False))
        else:
            feats = np.arange(n_feat)
        best = _gini_best_split(X[rows], yn.astype(float), feats, min_samples_leaf)
        if best is None:
            continue
        gain, f, thr = best
        go_left = X[rows, f] <= thr
        lrows, rrows = rows[go_left], rows[~go_left]
        left = b.add_leaf(y[lrows].mean())
        right = b.add_leaf(y[rrows].mean())
        b.make_split(node, f, thr, gain / n_root, left, right)
        # Right pushed first so the left subtree gets the lower node ids.
        stack.append((right, rrows, depth + 1))
        stack.append((left, lrows, depth + 1))
    return b.build()


def fit_decision_tree(X, y, hyper: dict, seed: int) -> TreeEnsemble:
    tree = grow_cart(X, y, int(hyper.get("max_depth", 8)), int(hyper.get("min_samples_leaf", 1)))
    return TreeEnsemble([tree], aggregate="mean", link="identity")


def fit_random_forest(X, y, hyper: dict, seed: int) -> TreeEnsemble:
    rng = np.random.default_rng(seed)
    n = X.shape[0]
    trees = []
    bootstrap = bool(hyper.get("bootstrap", True))
    for _ in range(int(hyper.get("n_trees", 100))):
        rows = rng.integers(0, n, size=n) if bootstrap else np.arange(n)
        trees.append(
            grow_cart(
                X[rows],
                y[rows],
                int(hyper.get("max_depth", 8)),
                int(hyper.get("min_samples_leaf", 1)),
                float(hyper.get("feature_subsample", 0.3)),
                rng,
            )
        )
    return TreeEnsemble(trees, aggregate="mean", link="identity")


def best_stump(X: np.ndarray, y_signed: np.ndarray, w: np.ndarray):
    """Weighted-error-minimising stump ``h(x) = s if x > t else -s``.

    Returns (error, feature, threshold, sign).
    """
    n = X.shape[0]
    order = np.argsort(X, axis=0, kind="stable")
    xs = np.take_along_axis(X, order, axis=0)
    wpos = np.where(y_signed > 0, w, 0.0)[order]
    wneg = np.where(y_signed < 0, w, 0.0)[order]
    total = float(w.sum())
    cum_pos = np.cumsum(wpos, axis=0)
    cum_neg = np.cumsum(wneg, axis=0)
    # s=+1 with the split after sorted position i: positives left plus negatives right are wrong.
    err_plus = cum_pos + (cum_neg[-1] - cum_neg)
    valid = np.zeros_like(err_plus, dtype=bool)
    valid[:-1] = xs[:-1] < xs[1:]
    best = None
    best_err = np.inf
    for sign, err in ((1, err_plus), (-1, total - err_plus)):
        err = np.where(valid, err, np.inf)
        j, i = divmod(int(np.argmin(err.T)), n)
        if err[i, j] < best_err:
            best_err, best = float(err[i, j]), (int(j), float(xs[i, j]), sign)
    if best is None:
        # Nothing varies: every row goes left and gets -sign.
        pos, neg = float(cum_pos[-1, 0]), float(cum_neg[-1, 0])
        sign = -1 if pos >= neg else 1
        return (neg if sign < 0 else pos), 0, float(X[:, 0].max()), sign
    return (best_err,) + best


def fit_adaboost(X, y, hyper: dict, seed: int) -> TreeEnsemble:
    """Discrete AdaBoost over stumps; score ``sigmoid(2 * sum alpha_t h_t(x))``."""
    n = X.shape[0]
    lr = float(hyper.get("learning_rate", 1.0))
    ys = np.where(y > 0, 1.0, -1.0)
    w = np.full(n, 1.0 / n)
    trees = []
    history = []
    for _ in range(int(hyper.get("n_stumps", 50))):
        err, f, thr, sign = best_stump(X, ys, w)
        err = min(max(err, 1e-10), 1.0 - 1e-10)
        alpha = lr * 0.5 * np.log((1.0 - err) / err)
        b = _TreeBuilder()
        root = b.add_leaf(0.0)
        left = b.add_leaf(-sign * alpha)
        right = b.add_leaf(sign * alpha)
        b.make_split(root, f, thr, 0.5 - err, left, right)
        tree = b.build()
        trees.append(tree)
        h = np.where(X[:, f] <= thr, -sign, sign)
        w = w * np.exp(-alpha * ys * h)
        w /= w.sum()
        history.append(float(np.sum(w[h != ys])))
        if err <= 1e-10:
            break
    ens = TreeEnsemble(trees, base_score=0.0, aggregate="sum", link="logistic", scale=2.0)
    ens.train_loss = history
    return ens

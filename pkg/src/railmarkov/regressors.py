"""Regression tree, random forest and ridge regression, written against numpy.

Trees are stored as flat node arrays so that a fitted forest serializes to
plain lists and predicts without recursion.
"""

from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, field

import numba
import numpy as np
import scipy.linalg

log = logging.getLogger(__name__)

LEAF = -1


@dataclass(frozen=True)
class ForestParams:
    n_trees: int = 100
    max_depth: int | None = None
    min_samples_leaf: int = 1
    min_samples_split: int = 2
    features_per_split: float = 1 / 3
    bootstrap: bool = True
    seed: int = 0

    def __post_init__(self):
        if self.n_trees < 1:
            raise ValueError("n_trees must be >= 1")
        if not 0 < self.features_per_split <= 1:
            raise ValueError("features_per_split must be in (0, 1]")
        if self.min_samples_leaf < 1 or self.min_samples_split < 2:
            raise ValueError("min_samples_leaf >= 1 and min_samples_split >= 2 required")

    def n_split_features(self, n_features: int) -> int:
        return max(1, min(n_features, math.ceil(self.features_per_split * n_features - 1e-12)))


def _check_xy(X, y):
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if X.ndim != 2:
        raise ValueError("X must be 2-dimensional")
    if y.ndim != 1 or X.shape[0] != y.shape[0]:
        raise ValueError(f"dimension mismatch: X has {X.shape[0]} rows, y has {y.size}")
    if y.size == 0:
        raise ValueError("cannot fit on an empty frame")
    return X, y


@dataclass
class RegressionTree:
    feature: np.ndarray      # split feature per node, LEAF for leaves
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray        # mean target of the node's training samples

    @property
    def n_nodes(self) -> int:
        return self.feature.size

    def predict(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        node = np.zeros(X.shape[0], dtype=np.int64)
        rows = np.arange(X.shape[0])
        while True:
            f = self.feature[node]
            inner = f != LEAF
            if not inner.any():
                return self.value[node]
            go_left = X[rows[inner], f[inner]] <= self.threshold[node[inner]]
            node[inner] = np.where(go_left, self.left[node[inner]], self.right[node[inner]])

    def to_json(self) -> dict:
        return {"feature": self.feature.tolist(), "threshold": self.threshold.tolist(),
                "left": self.left.tolist(), "right": self.right.tolist(),
                "value": self.value.tolist()}

    @classmethod
    def from_json(cls, d: dict) -> "RegressionTree":
        return cls(np.array(d["feature"], dtype=np.int64), np.array(d["threshold"], dtype=float),
                   np.array(d["left"], dtype=np.int64), np.array(d["right"], dtype=np.int64),
                   np.array(d["value"], dtype=float))


@numba.njit(cache=True)
def _grow(X, y, keys, k, max_depth, min_leaf, min_split):
    """Grow a tree depth-first; returns node arrays.

    ``keys[node]`` ranks the features for that node: the ``k`` lowest keys
    form the searched subset, the rest are tried only if the subset admits
    no split. An empty ``keys`` means every feature is searched.
    """
    m, d = X.shape
    cap = 2 * m + 1
    feature = np.full(cap, -1, np.int64)
    threshold = np.zeros(cap)
    left = np.full(cap, -1, np.int64)
    right = np.full(cap, -1, np.int64)
    value = np.zeros(cap)

    idx_buf = np.arange(m)
    # stack of (node, start, stop, depth) over segments of idx_buf
    st_node = np.zeros(cap, np.int64)
    st_lo = np.zeros(cap, np.int64)
    st_hi = np.zeros(cap, np.int64)
    st_dep = np.zeros(cap, np.int64)
    top = 0
    n_nodes = 1
    value[0] = y.mean()
    st_node[0], st_lo[0], st_hi[0], st_dep[0] = 0, 0, m, 0
    top = 1
    xs = np.empty(m)
    ys = np.empty(m)
    while top > 0:
        top -= 1
        node, lo, hi, depth = st_node[top], st_lo[top], st_hi[top], st_dep[top]
        n = hi - lo
        seg = idx_buf[lo:hi]
        ymin = y[seg].min()
        ymax = y[seg].max()
        if depth >= max_depth or n < min_split or n < 2 * min_leaf or ymin == ymax or d == 0:
            continue
        if keys.shape[0] > 0:
            ranked = np.argsort(keys[node], kind="mergesort")
        else:
            ranked = np.arange(d)
        best_f = -1
        best_t = 0.0
        best_s = np.inf
        start = 0
        stop = k
        while start < d:
            subset = np.sort(ranked[start:stop])
            for f in subset:
                xcol = X[seg, f]
                order = np.argsort(xcol, kind="mergesort")
                for i in range(n):
                    xs[i] = xcol[order[i]]
                    ys[i] = y[seg[order[i]]]
                tot_s = 0.0
                tot_q = 0.0
                for i in range(n):
                    tot_s += ys[i]
                    tot_q += ys[i] * ys[i]
                sl = 0.0
                ql = 0.0
                for i in range(n - 1):
                    sl += ys[i]
                    ql += ys[i] * ys[i]
                    nl = i + 1
                    nr = n - nl
                    if xs[i + 1] <= xs[i] or nl < min_leaf or nr < min_leaf:
                        continue
                    sr = tot_s - sl
                    qr = tot_q - ql
                    sse = (ql - sl * sl / nl) + (qr - sr * sr / nr)
                    if sse < best_s:
                        best_s = sse
                        best_f = f
                        a = xs[i]
                        b = xs[i + 1]
                        t = a + (b - a) / 2.0
                        if not (a <= t and t < b):
                            t = a
                        best_t = t
            if best_f >= 0:
                break
            start = stop
            stop = d
        if best_f < 0:
            continue
        # partition seg in place: left block first, stable
        tmp = seg.copy()
        nl = 0
        for i in range(n):
            if X[tmp[i], best_f] <= best_t:
                idx_buf[lo + nl] = tmp[i]
                nl += 1
        j = lo + nl
        for i in range(n):
            if X[tmp[i], best_f] > best_t:
                idx_buf[j] = tmp[i]
                j += 1
        feature[node] = best_f
        threshold[node] = best_t
        ln = n_nodes
        rn = n_nodes + 1
        n_nodes += 2
        left[node] = ln
        right[node] = rn
        value[ln] = y[idx_buf[lo:lo + nl]].mean()
        value[rn] = y[idx_buf[lo + nl:hi]].mean()
        st_node[top], st_lo[top], st_hi[top], st_dep[top] = rn, lo + nl, hi, depth + 1
        top += 1
        st_node[top], st_lo[top], st_hi[top], st_dep[top] = ln, lo, lo + nl, depth + 1
        top += 1
    return (feature[:n_nodes], threshold[:n_nodes], left[:n_nodes], right[:n_nodes],
            value[:n_nodes])


def fit_tree(X, y, params: ForestParams | None = None,
             rng: np.random.Generator | None = None) -> RegressionTree:
    """Greedy variance-reduction CART tree.

    Each node searches a random subset of ``params.n_split_features``
    features for the (feature, midpoint threshold) pair with the lowest
    summed child SSE; ties go to the lower feature index, then the lower
    threshold. If the subset admits no split the remaining features are
    searched, so a node with distinct rows and non-constant targets is
    always split while depth and size limits allow.
    """
    params = params or ForestParams()
    X, y = _check_xy(X, y)
    rng = rng if rng is not None else np.random.default_rng(params.seed)
    d = X.shape[1]
    k = params.n_split_features(d) if d else 0
    keys = rng.random((2 * y.size + 1, d)) if k < d else np.empty((0, d))
    max_depth = params.max_depth if params.max_depth is not None else np.iinfo(np.int64).max
    arrays = _grow(np.ascontiguousarray(X), y, keys, k, max_depth,
                   params.min_samples_leaf, params.min_samples_split)
    return RegressionTree(*(a.copy() for a in arrays))


@dataclass
class Forest:
    trees: list[RegressionTree]
    params: ForestParams
    n_features: int
    _stacked: tuple | None = field(default=None, repr=False, compare=False)

    def _stack(self):
        if self._stacked is None:
            offsets = np.cumsum([0] + [t.n_nodes for t in self.trees[:-1]])
            feat = np.concatenate([t.feature for t in self.trees])
            thr = np.concatenate([t.threshold for t in self.trees])
            lft = np.concatenate([np.where(t.left == LEAF, LEAF, t.left + o)
                                  for t, o in zip(self.trees, offsets)])
            rgt = np.concatenate([np.where(t.right == LEAF, LEAF, t.right + o)
                                  for t, o in zip(self.trees, offsets)])
            val = np.concatenate([t.value for t in self.trees])
            self._stacked = (offsets.astype(np.int64), feat, thr, lft, rgt, val)
        return self._stacked

    def predict(self, X) -> np.ndarray:
        """Mean of the tree predictions, one value per row of ``X``."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if X.shape[1] != self.n_features:
            raise ValueError(f"expected {self.n_features} features, got {X.shape[1]}")
        roots, feat, thr, lft, rgt, val = self._stack()
        out = np.empty(X.shape[0])
        for r in range(X.shape[0]):
            x = X[r]
            node = roots.copy()
            while True:
                f = feat[node]
                inner = f != LEAF
                if not inner.any():
                    break
                ni = node[inner]
                node[inner] = np.where(x[f[inner]] <= thr[ni], lft[ni], rgt[ni])
            # sum in tree order for reproducibility
            out[r] = math.fsum(val[node]) / len(self.trees)
        return out

    def to_json(self) -> dict:
        return {"params": asdict(self.params), "n_features": self.n_features,
                "trees": [t.to_json() for t in self.trees]}

    @classmethod
    def from_json(cls, d: dict) -> "Forest":
        return cls([RegressionTree.from_json(t) for t in d["trees"]],
                   ForestParams(**d["params"]), int(d["n_features"]))


def tree_rng(seed: int, tree_index: int) -> np.random.Generator:
    return np.random.default_rng([seed, tree_index])


def fit_forest(X, y, params: ForestParams | None = None) -> Forest:
    params = params or ForestParams()
    X, y = _check_xy(X, y)
    trees = []
    for t in range(params.n_trees):
        rng = tree_rng(params.seed, t)
        if params.bootstrap:
            idx = rng.integers(0, y.size, size=y.size)
            trees.append(fit_tree(X[idx], y[idx], params, rng))
        else:
            trees.append(fit_tree(X, y, params, rng))
    return Forest(trees, params, X.shape[1])


def predict_forest(forest: Forest, x) -> float | np.ndarray:
    x = np.asarray(x, dtype=float)
    out = forest.predict(x)
    return float(out[0]) if x.ndim == 1 else out


# -- ridge -----------------------------------------------------------------

@dataclass
class RidgeModel:
    weights: np.ndarray
    intercept: float
    lam: float
    mean: np.ndarray
    scale: np.ndarray

    def transform(self, X) -> np.ndarray:
        """Map raw inputs into the space the weights were solved in."""
        return (np.asarray(X, dtype=float) - self.mean) / self.scale

    def predict(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        return self.transform(X) @ self.weights + self.intercept

    def to_json(self) -> dict:
        return {"weights": self.weights.tolist(), "intercept": self.intercept, "lambda": self.lam,
                "mean": self.mean.tolist(), "scale": self.scale.tolist()}

    @classmethod
    def from_json(cls, d: dict) -> "RidgeModel":
        return cls(np.array(d["weights"], dtype=float), float(d["intercept"]), float(d["lambda"]),
                   np.array(d["mean"], dtype=float), np.array(d["scale"], dtype=float))


def fit_ridge(X, y, lam: float = 1.0, standardize: bool = True,
              fit_intercept: bool = True) -> RidgeModel:
    """Solve (XᵀX + λI)w = Xᵀy on centred, optionally scaled columns.

    Columns with zero variance are left unscaled. The intercept is not
    penalized: it is recovered from the column and target means.
    """
    X, y = _check_xy(X, y)
    if lam < 0:
        raise ValueError("lambda must be >= 0")
    if not (np.isfinite(X).all() and np.isfinite(y).all()):
        raise ValueError("non-finite values in ridge inputs")
    d = X.shape[1]
    mean = X.mean(axis=0) if fit_intercept else np.zeros(d)
    if standardize:
        scale = X.std(axis=0)
        scale[scale == 0] = 1.0
    else:
        scale = np.ones(d)
    y_mean = float(y.mean()) if fit_intercept else 0.0
    Z = (X - mean) / scale
    A = Z.T @ Z + lam * np.eye(d)
    b = Z.T @ (y - y_mean)
    try:
        c, low = scipy.linalg.cho_factor(A, check_finite=False)
        w = scipy.linalg.cho_solve((c, low), b, check_finite=False)
        if not np.isfinite(w).all():
            raise np.linalg.LinAlgError("non-finite solution")
    except (np.linalg.LinAlgError, scipy.linalg.LinAlgError):
        log.warning("singular normal equations (lambda=%g); using minimum-norm solution", lam)
        w = np.linalg.lstsq(A, b, rcond=None)[0]
    return RidgeModel(w, y_mean, float(lam), mean, scale)


def predict_ridge(model: RidgeModel, x) -> float | np.ndarray:
    x = np.asarray(x, dtype=float)
    out = model.predict(x)
    return float(out[0]) if x.ndim == 1 else out

"""CART-style decision and regression trees built on numpy.

The classification tree searches Gini-optimal thresholds over a random
feature subset per split (the forest's source of diversity); the regression
tree fits squared error and is used as the gradient-boosting base learner
with Newton leaf values.
"""

from __future__ import annotations

import numpy as np

_MIN_GAIN = 1e-12


class _Node:
    __slots__ = ("feature", "threshold", "left", "right", "value", "counts")

    def __init__(self):
        self.feature = -1
        self.threshold = 0.0
        self.left = None
        self.right = None
        self.value = 0.0
        self.counts = (0, 0)


def _gini(n1: np.ndarray, n: np.ndarray) -> np.ndarray:
    p = n1 / n
    return 1.0 - p * p - (1.0 - p) * (1.0 - p)


class DecisionTree:
    """Binary classifier; splits minimize weighted Gini impurity.

    feature_subset limits how many features each split may consider (drawn
    without replacement per node); None means all features.  splitter
    'random' draws one uniform threshold per candidate feature instead of
    scanning all boundaries.
    """

    def __init__(
        self,
        max_depth: int | None = None,
        feature_subset: int | None = None,
        min_samples_split: int = 2,
        splitter: str = "best",
        seed: int = 0,
    ):
        if splitter not in ("best", "random"):
            raise ValueError(f"unknown splitter {splitter!r}")
        self.max_depth = max_depth
        self.feature_subset = feature_subset
        self.min_samples_split = min_samples_split
        self.splitter = splitter
        self.seed = seed
        self.root: _Node | None = None
        self.n_features = 0

    def fit(self, X: np.ndarray, y: np.ndarray) -> "DecisionTree":
        X = np.asarray(X, dtype=np.float64)
        y = np.asarray(y, dtype=np.int64)
        self.n_features = X.shape[1]
        rng = np.random.default_rng(self.seed)
        self.root = self._grow(X, y, depth=0, rng=rng)
        return self

    def _leaf(self, y: np.ndarray) -> _Node:
        node = _Node()
        n1 = int(y.sum())
        node.counts = (len(y) - n1, n1)
        node.value = 1 if n1 > len(y) - n1 else 0
        return node

    def _candidate_features(self, rng: np.random.Generator) -> np.ndarray:
        if self.feature_subset is None or self.feature_subset >= self.n_features:
            return np.arange(self.n_features)
        return rng.permutation(self.n_features)[: self.feature_subset]

    def _grow(self, X: np.ndarray, y: np.ndarray, depth: int, rng: np.random.Generator) -> _Node:
        n = len(y)
        n1 = int(y.sum())
        if (
            n < self.min_samples_split
            or n1 == 0
            or n1 == n
            or (self.max_depth is not None and depth >= self.max_depth)
        ):
            return self._leaf(y)
        parent_imp = float(_gini(np.array([n1]), np.array([n]))[0])
        best = (parent_imp - _MIN_GAIN, -1, 0.0)
        for f in self._candidate_features(rng):
            xs = X[:, f]
            if self.splitter == "random":
                lo, hi = xs.min(), xs.max()
                if lo == hi:
                    continue
                thr = rng.uniform(lo, hi)
                left = xs <= thr
                nl = int(left.sum())
                if nl == 0 or nl == n:
                    continue
                n1l = int(y[left].sum())
                imp = (
                    nl * float(_gini(np.array([n1l]), np.array([nl]))[0])
                    + (n - nl) * float(_gini(np.array([n1 - n1l]), np.array([n - nl]))[0])
                ) / n
                if imp < best[0]:
                    best = (imp, int(f), float(thr))
                continue
            order = np.argsort(xs, kind="stable")
            xs_s = xs[order]
            ys_s = y[order]
            boundaries = np.flatnonzero(xs_s[:-1] < xs_s[1:])
            if len(boundaries) == 0:
                continue
            c1 = np.cumsum(ys_s)
            nl = boundaries + 1
            n1l = c1[boundaries]
            nr = n - nl
            n1r = n1 - n1l
            imps = (nl * _gini(n1l, nl) + nr * _gini(n1r, nr)) / n
            k = int(np.argmin(imps))
            if imps[k] < best[0]:
                thr = (xs_s[boundaries[k]] + xs_s[boundaries[k] + 1]) / 2.0
                best = (float(imps[k]), int(f), float(thr))
        if best[1] < 0:
            return self._leaf(y)
        node = _Node()
        node.feature = best[1]
        node.threshold = best[2]
        n1_all = int(y.sum())
        node.counts = (n - n1_all, n1_all)
        mask = X[:, node.feature] <= node.threshold
        node.left = self._grow(X[mask], y[mask], depth + 1, rng)
        node.right = self._grow(X[~mask], y[~mask], depth + 1, rng)
        return node

    def _apply(self, node: _Node, X: np.ndarray, idx: np.ndarray, out: np.ndarray, proba: bool) -> None:
        if node.left is None:
            n0, n1 = node.counts
            out[idx] = (n1 / (n0 + n1)) if proba else node.value
            return
        mask = X[idx, node.feature] <= node.threshold
        self._apply(node.left, X, idx[mask], out, proba)
        self._apply(node.right, X, idx[~mask], out, proba)

    def predict(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        self._check_dim(X)
        out = np.zeros(len(X), dtype=np.int64)
        if len(X):
            self._apply(self.root, X, np.arange(len(X)), out, proba=False)
        return out

    def predict_proba(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        self._check_dim(X)
        out = np.zeros(len(X), dtype=np.float64)
        if len(X):
            self._apply(self.root, X, np.arange(len(X)), out, proba=True)
        return out

    def _check_dim(self, X: np.ndarray) -> None:
        if self.root is None:
            raise RuntimeError("tree not fitted")
        if X.ndim != 2 or X.shape[1] != self.n_features:
            raise ValueError(f"expected {self.n_features} features, got shape {X.shape}")


class RegressionTree:
    """Squared-error tree over gradients with Newton leaf values.

    fit() takes per-sample gradients g and hessians h; each leaf stores
    sum(g) / (sum(h) + eps), the one-step Newton estimate used by boosting.
    """

    def __init__(self, max_depth: int = 3, min_samples_split: int = 2, eps: float = 1e-9):
        self.max_depth = max_depth
        self.min_samples_split = min_samples_split
        self.eps = eps
        self.root: _Node | None = None
        self.n_features = 0

    def fit(self, X: np.ndarray, g: np.ndarray, h: np.ndarray) -> "RegressionTree":
        X = np.asarray(X, dtype=np.float64)
        self.n_features = X.shape[1]
        self.root = self._grow(X, np.asarray(g, dtype=np.float64), np.asarray(h, dtype=np.float64), 0)
        return self

    def _leaf(self, g: np.ndarray, h: np.ndarray) -> _Node:
        node = _Node()
        node.value = float(g.sum() / (h.sum() + self.eps))
        return node

    def _grow(self, X: np.ndarray, g: np.ndarray, h: np.ndarray, depth: int) -> _Node:
        n = len(g)
        if n < self.min_samples_split or depth >= self.max_depth:
            return self._leaf(g, h)
        total_sse = float(g @ g) - g.sum() ** 2 / n
        best = (total_sse - _MIN_GAIN, -1, 0.0)
        for f in range(self.n_features):
            xs = X[:, f]
            order = np.argsort(xs, kind="stable")
            xs_s = xs[order]
            gs = g[order]
            boundaries = np.flatnonzero(xs_s[:-1] < xs_s[1:])
            if len(boundaries) == 0:
                continue
            csum = np.cumsum(gs)
            csq = np.cumsum(gs * gs)
            nl = boundaries + 1
            sl = csum[boundaries]
            ql = csq[boundaries]
            nr = n - nl
            sr = csum[-1] - sl
            qr = csq[-1] - ql
            sse = (ql - sl * sl / nl) + (qr - sr * sr / nr)
            k = int(np.argmin(sse))
            if sse[k] < best[0]:
                thr = (xs_s[boundaries[k]] + xs_s[boundaries[k] + 1]) / 2.0
                best = (float(sse[k]), int(f), float(thr))
        if best[1] < 0:
            return self._leaf(g, h)
        node = _Node()
        node.feature = best[1]
        node.threshold = best[2]
        mask = X[:, node.feature] <= node.threshold
        node.left = self._grow(X[mask], g[mask], h[mask], depth + 1)
        node.right = self._grow(X[~mask], g[~mask], h[~mask], depth + 1)
        return node

    def _apply(self, node: _Node, X: np.ndarray, idx: np.ndarray, out: np.ndarray) -> None:
        if node.left is None:
            out[idx] = node.value
            return
        mask = X[idx, node.feature] <= node.threshold
        self._apply(node.left, X, idx[mask], out)
        self._apply(node.right, X, idx[~mask], out)

    def predict(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        if self.root is None:
            raise RuntimeError("tree not fitted")
        if X.ndim != 2 or X.shape[1] != self.n_features:
            raise ValueError(f"expected {self.n_features} features, got shape {X.shape}")
        out = np.zeros(len(X), dtype=np.float64)
        if len(X):
            self._apply(self.root, X, np.arange(len(X)), out)
        return out

"""User clustering for group validation: k-means++ seeding plus Lloyd."""

from __future__ import annotations

import logging
from typing import Mapping, NamedTuple, Sequence

import numpy as np

logger = logging.getLogger("noisegate.evaluation.clustering")

DEFAULT_K = 20
DEFAULT_MAX_ITER = 100


class ClusterAssignment(NamedTuple):
    assignment: dict[int, int]
    centroids: np.ndarray
    k: int
    inertia_curve: list[float]


def _kmeans_pp_init(X: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = len(X)
    centroids = np.empty((k, X.shape[1]))
    centroids[0] = X[int(rng.integers(n))]
    d2 = np.sum((X - centroids[0]) ** 2, axis=1)
    for c in range(1, k):
        total = float(d2.sum())
        if total <= 0.0:
            pick = int(rng.integers(n))
        else:
            pick = int(rng.choice(n, p=d2 / total))
        centroids[c] = X[pick]
        d2 = np.minimum(d2, np.sum((X - centroids[c]) ** 2, axis=1))
    return centroids


def cluster_users(
    user_vectors: Mapping[int, np.ndarray] | Mapping[int, Sequence[float]],
    k: int = DEFAULT_K,
    seed: int = 0,
    max_iter: int = DEFAULT_MAX_ITER,
) -> ClusterAssignment:
    """Lloyd's algorithm with k-means++ seeding; deterministic per seed.

    Users are processed in sorted id order, so the result depends only on
    the vectors and the seed.  Inertia is recorded after every assignment
    pass and is non-increasing.  If there are fewer users than k, k is
    lowered with a warning.  Empty clusters keep their previous centroid.
    """
    users = sorted(user_vectors)
    if not users:
        raise ValueError("no users to cluster")
    rows = [np.atleast_1d(np.asarray(user_vectors[u], dtype=np.float64)) for u in users]
    if len({row.shape for row in rows}) != 1 or rows[0].ndim != 1:
        raise ValueError("user vectors must share one length")
    X = np.array(rows)
    n = len(users)
    if k > n:
        logger.warning("k=%d exceeds %d users; lowering k", k, n)
        k = n
    if k < 1:
        raise ValueError("k must be >= 1")
    rng = np.random.default_rng(seed)
    centroids = _kmeans_pp_init(X, k, rng)
    labels = np.zeros(n, dtype=np.int64)
    prev: np.ndarray | None = None
    inertia_curve: list[float] = []
    for _ in range(max_iter):
        d2 = np.sum((X[:, None, :] - centroids[None, :, :]) ** 2, axis=2)
        labels = np.argmin(d2, axis=1)
        inertia_curve.append(float(d2[np.arange(n), labels].sum()))
        if prev is not None and np.array_equal(labels, prev):
            break
        prev = labels
        for c in range(k):
            members = X[labels == c]
            if len(members):
                centroids[c] = members.mean(axis=0)
    assignment = {u: int(labels[i]) for i, u in enumerate(users)}
    return ClusterAssignment(assignment, centroids, k, inertia_curve)


def elbow_curve(
    user_vectors: Mapping[int, np.ndarray],
    ks: Sequence[int],
    seed: int = 0,
    max_iter: int = DEFAULT_MAX_ITER,
) -> list[tuple[int, float]]:
    """Final inertia per candidate k; selection is left to the reader."""
    out = []
    for k in ks:
        result = cluster_users(user_vectors, k, seed, max_iter)
        out.append((result.k, result.inertia_curve[-1]))
    return out

"""Prediction and recommendation primitives.

Two predictors live here: a Pearson-correlation user-kNN (used by the
accuracy-centered detector) and a biased matrix-factorization recommender
trained with SGD (used by the evaluation protocol and for user clustering).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import NamedTuple

import numpy as np

from .dataset import RatingsTable, Scale
from .ioutil import atomic_write_text

CHECKPOINT_FORMAT = "noisegate-mf"
CHECKPOINT_VERSION = 1

# Variance sums below this are treated as exactly zero.  Ratings live on a
# coarse grid, so any genuinely nonzero variance sum is orders of magnitude
# larger than accumulated rounding error.
_VAR_EPS = 1e-9


@dataclass(frozen=True)
class KnnConfig:
    k: int = 35
    min_overlap: int = 2
    significance_cap: int = 50

    def __post_init__(self) -> None:
        if self.k < 1:
            raise ValueError("k must be >= 1")
        if self.min_overlap < 1:
            raise ValueError("min_overlap must be >= 1")
        if self.significance_cap < 1:
            raise ValueError("significance_cap must be >= 1")


def pearson_similarity(
    a_ratings: dict[int, float], b_ratings: dict[int, float], cfg: KnnConfig = KnnConfig()
) -> float:
    """Significance-weighted Pearson correlation over co-rated items.

    The raw correlation is multiplied by min(n, significance_cap) / significance_cap
    so that similarities backed by few co-rated items carry less weight.
    Degenerate cases (overlap below min_overlap, zero variance) return 0.
    """
    common = a_ratings.keys() & b_ratings.keys()
    n = len(common)
    if n < cfg.min_overlap:
        return 0.0
    xs = np.array([a_ratings[i] for i in sorted(common)])
    ys = np.array([b_ratings[i] for i in sorted(common)])
    sx = xs.sum()
    sy = ys.sum()
    cov = float(xs @ ys) - sx * sy / n
    var_x = float(xs @ xs) - sx * sx / n
    var_y = float(ys @ ys) - sy * sy / n
    if var_x <= _VAR_EPS or var_y <= _VAR_EPS:
        return 0.0
    raw = cov / np.sqrt(var_x * var_y)
    raw = float(np.clip(raw, -1.0, 1.0))
    return raw * min(n, cfg.significance_cap) / cfg.significance_cap


class SimilarityMatrix:
    """All-pairs significance-weighted Pearson similarities for one table.

    Matches pearson_similarity pairwise to floating-point noise while being
    computed with five dense matrix products instead of per-pair loops.
    """

    def __init__(self, table: RatingsTable, cfg: KnnConfig = KnnConfig()):
        self.cfg = cfg
        self.user_ids = table.user_ids()
        self.index = {u: k for k, u in enumerate(self.user_ids)}
        item_ids = table.item_ids()
        item_index = {i: k for k, i in enumerate(item_ids)}
        nu, ni = len(self.user_ids), len(item_ids)
        R = np.zeros((nu, ni))
        M = np.zeros((nu, ni))
        rows_u = np.fromiter((self.index[int(u)] for u in table.users), dtype=np.int64, count=len(table))
        rows_i = np.fromiter((item_index[int(i)] for i in table.items), dtype=np.int64, count=len(table))
        R[rows_u, rows_i] = table.values
        M[rows_u, rows_i] = 1.0
        n = M @ M.T
        sx = R @ M.T
        sxx = (R * R) @ M.T
        sxy = R @ R.T
        with np.errstate(invalid="ignore", divide="ignore"):
            cov = sxy - sx * sx.T / np.where(n > 0, n, 1)
            var_x = sxx - sx * sx / np.where(n > 0, n, 1)
            var_y = var_x.T
            denom = np.sqrt(var_x * var_y)
            raw = np.where(
                (var_x > _VAR_EPS) & (var_y > _VAR_EPS) & (n >= cfg.min_overlap),
                cov / np.where(denom > 0, denom, 1),
                0.0,
            )
        raw = np.clip(raw, -1.0, 1.0)
        self.matrix = raw * np.minimum(n, cfg.significance_cap) / cfg.significance_cap

    def between(self, user_a: int, user_b: int) -> float:
        return float(self.matrix[self.index[user_a], self.index[user_b]])

    def row(self, user: int) -> np.ndarray:
        return self.matrix[self.index[user]]


def knn_predict(
    train: RatingsTable,
    user: int,
    item: int,
    cfg: KnnConfig = KnnConfig(),
    sims: SimilarityMatrix | None = None,
) -> float | None:
    """Mean-centered weighted kNN prediction; None means unpredictable.

    Neighbors are train users with nonzero similarity who rated the item,
    ranked by |similarity| descending (ties by ascending user id), truncated
    to cfg.k.  The prediction is clamped to the rating scale.
    """
    user_rows = train.user_rows(user)
    if len(user_rows) == 0:
        raise ValueError(f"user {user} not in train")
    rater_rows = train.item_rows(item)
    if len(rater_rows) == 0:
        return None
    stats = train.user_stats()
    profile = None
    candidates: list[tuple[float, int, float]] = []
    for k in rater_rows:
        v = int(train.users[k])
        if v == user:
            continue
        if sims is not None:
            w = sims.between(user, v)
        else:
            if profile is None:
                profile = train.user_profile(user)
            w = pearson_similarity(profile, train.user_profile(v), cfg)
        if w != 0.0:
            candidates.append((w, v, float(train.values[k])))
    if not candidates:
        return None
    candidates.sort(key=lambda c: (-abs(c[0]), c[1]))
    chosen = candidates[: cfg.k]
    num = sum(w * (r - stats[v][0]) for w, v, r in chosen)
    den = sum(abs(w) for w, _, _ in chosen)
    pred = stats[user][0] + num / den
    return train.scale.clamp(pred)


# -- matrix factorization ----------------------------------------------


class MfModel:
    """Biased MF model: prediction = mu + b_u + b_i + p_u . q_i, clamped to scale."""

    def __init__(
        self,
        users: list[int],
        items: list[int],
        P: np.ndarray,
        Q: np.ndarray,
        bu: np.ndarray,
        bi: np.ndarray,
        global_mean: float,
        scale: Scale,
        rmse_per_epoch: list[float] | None = None,
    ):
        self.users = list(users)
        self.items = list(items)
        self.P = P
        self.Q = Q
        self.bu = bu
        self.bi = bi
        self.global_mean = global_mean
        self.scale = scale
        self.rmse_per_epoch = list(rmse_per_epoch or [])
        self.urow = {u: k for k, u in enumerate(self.users)}
        self.irow = {i: k for k, i in enumerate(self.items)}

    @property
    def f(self) -> int:
        return self.P.shape[1]

    @property
    def user_factors(self) -> dict[int, np.ndarray]:
        return {u: self.P[k] for u, k in self.urow.items()}

    @property
    def item_factors(self) -> dict[int, np.ndarray]:
        return {i: self.Q[k] for i, k in self.irow.items()}

    def predict(self, user: int, item: int) -> float:
        score = self.global_mean
        ur = self.urow.get(user)
        ir = self.irow.get(item)
        if ur is not None:
            score += self.bu[ur]
        if ir is not None:
            score += self.bi[ir]
        if ur is not None and ir is not None:
            score += float(self.P[ur] @ self.Q[ir])
        return self.scale.clamp(score)

    def user_vector(self, user: int) -> np.ndarray:
        return self.P[self.urow[user]]


def mf_train(
    train: RatingsTable,
    f: int = 16,
    epochs: int = 20,
    lr: float = 0.01,
    reg: float = 0.02,
    seed: int = 0,
) -> MfModel:
    """SGD on squared error with L2 regularization over biases and factors.

    Iteration order is a fresh seeded permutation each epoch, so the result
    is bitwise-reproducible for a fixed seed.  Training RMSE is recorded per
    epoch; a non-finite loss aborts with diagnostics.
    """
    if len(train) == 0:
        raise ValueError("train table is empty")
    users = train.user_ids()
    items = train.item_ids()
    urow_of = {u: k for k, u in enumerate(users)}
    irow_of = {i: k for k, i in enumerate(items)}
    urow = np.fromiter((urow_of[int(u)] for u in train.users), dtype=np.int64, count=len(train))
    irow = np.fromiter((irow_of[int(i)] for i in train.items), dtype=np.int64, count=len(train))
    values = train.values
    mu = float(values.mean())
    rng = np.random.default_rng(seed)
    # init noise on p.q scales with sqrt(f) * sigma^2; keep it ~1e-2 at any f
    sigma = 0.1 / math.sqrt(f)
    P = rng.normal(0.0, sigma, size=(len(users), f))
    Q = rng.normal(0.0, sigma, size=(len(items), f))
    bu = np.zeros(len(users))
    bi = np.zeros(len(items))
    rmse_per_epoch: list[float] = []
    urow_l = urow.tolist()
    irow_l = irow.tolist()
    vals_l = values.tolist()
    for epoch in range(epochs):
        order = rng.permutation(len(values)).tolist()
        for k in order:
            ur = urow_l[k]
            ir = irow_l[k]
            pu = P[ur]
            qi = Q[ir]
            e = vals_l[k] - (mu + bu[ur] + bi[ir] + float(pu @ qi))
            bu[ur] += lr * (e - reg * bu[ur])
            bi[ir] += lr * (e - reg * bi[ir])
            P[ur] = pu + lr * (e * qi - reg * pu)
            Q[ir] = qi + lr * (e * pu - reg * qi)
        pred = mu + bu[urow] + bi[irow] + np.einsum("ij,ij->i", P[urow], Q[irow])
        rmse = float(np.sqrt(np.mean((values - pred) ** 2)))
        if not np.isfinite(rmse):
            raise RuntimeError(
                f"MF training diverged at epoch {epoch}: rmse={rmse} "
                f"(f={f}, lr={lr}, reg={reg}, seed={seed})"
            )
        rmse_per_epoch.append(rmse)
    return MfModel(users, items, P, Q, bu, bi, mu, train.scale, rmse_per_epoch)


class TopKList(NamedTuple):
    user_id: int
    items: list[tuple[int, float]]


def recommend_topk(model: MfModel, train: RatingsTable, user: int, K: int) -> TopKList:
    """Top-K unrated items by predicted score, ties broken by ascending item id."""
    if user not in model.urow:
        raise ValueError(f"user {user} unknown to model")
    if K < 0:
        raise ValueError("K must be >= 0")
    rated = set(train.user_profile(user))
    ur = model.urow[user]
    scores = model.global_mean + model.bu[ur] + model.bi + model.Q @ model.P[ur]
    np.clip(scores, model.scale.r_min, model.scale.r_max, out=scores)
    item_ids = np.array(model.items, dtype=np.int64)
    keep = np.array([i not in rated for i in model.items], dtype=bool)
    scores = scores[keep]
    item_ids = item_ids[keep]
    order = np.lexsort((item_ids, -scores))[:K]
    return TopKList(user, [(int(item_ids[k]), float(scores[k])) for k in order])


# -- checkpointing ------------------------------------------------------


def save_model(model: MfModel, path: str | Path) -> None:
    blob = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "f": model.f,
        "global_mean": model.global_mean,
        "scale": [model.scale.r_min, model.scale.r_max],
        "users": model.users,
        "items": model.items,
        "user_bias": model.bu.tolist(),
        "item_bias": model.bi.tolist(),
        "user_factors": model.P.tolist(),
        "item_factors": model.Q.tolist(),
        "rmse_per_epoch": model.rmse_per_epoch,
    }
    atomic_write_text(path, json.dumps(blob, sort_keys=True) + "\n")


def load_model(path: str | Path) -> MfModel:
    with Path(path).open() as fh:
        blob = json.load(fh)
    if blob.get("format") != CHECKPOINT_FORMAT:
        raise ValueError(f"{path}: not a {CHECKPOINT_FORMAT} checkpoint")
    if blob.get("version") != CHECKPOINT_VERSION:
        raise ValueError(f"{path}: unsupported checkpoint version {blob.get('version')}")
    return MfModel(
        blob["users"],
        blob["items"],
        np.array(blob["user_factors"], dtype=np.float64).reshape(len(blob["users"]), blob["f"]),
        np.array(blob["item_factors"], dtype=np.float64).reshape(len(blob["items"]), blob["f"]),
        np.array(blob["user_bias"], dtype=np.float64),
        np.array(blob["item_bias"], dtype=np.float64),
        float(blob["global_mean"]),
        Scale(*blob["scale"]),
        [float(x) for x in blob.get("rmse_per_epoch", [])],
    )

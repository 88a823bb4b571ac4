"""User-centered detector.

Users are grouped by how much they rate (population terciles) and how
coherent their ratings are within genres.  For the groups worth processing,
a rating's noisy degree is the share of the item's genres on which the
rating deviates relatively from the user's own genre means.
"""

from __future__ import annotations

import logging
from enum import Enum
from typing import Mapping, NamedTuple, Sequence

import numpy as np

from ..dataset import RatingsTable
from .verdict import Verdict

logger = logging.getLogger("noisegate.board.nf2")

DEFAULT_THETA_HEAVY_MEDIUM = 0.075
DEFAULT_THETA_LIGHT = 0.05
DEFAULT_RND_CUT = 0.5
DEFAULT_COHERENCE_CUT = 0.8
_EPS = 1e-9


class Quantity(Enum):
    HEAVY = "heavy"
    MEDIUM = "medium"
    LIGHT = "light"


class Quality(Enum):
    EASY = "easy"
    DIFFICULT = "difficult"


class Nf2Group(NamedTuple):
    quantity: Quantity
    quality: Quality


def _genre_matrix(table: RatingsTable, rows: np.ndarray) -> np.ndarray:
    genres = table.genres
    return np.array([genres.vector(int(table.items[k])) for k in rows])


def user_coherence(user: int, table: RatingsTable) -> tuple[float, bool]:
    """1 - mean normalized within-genre deviation; (coherence, had_genres).

    For each rated item with at least one genre, the deviation is the mean
    over the item's genres g of |r - m_g| / span, where m_g is the user's
    mean rating over items carrying g.  Items without genres are skipped;
    a user with only genre-less items gets coherence 1.0.
    """
    if table.genres is None:
        raise ValueError("genre vectors unavailable")
    rows = table.user_rows(user)
    if len(rows) == 0:
        raise ValueError(f"user {user} not in table")
    G = _genre_matrix(table, rows)
    values = table.values[rows]
    span = table.scale.span
    counts = G.sum(axis=0)
    sums = values @ G
    with np.errstate(invalid="ignore"):
        means = np.where(counts > 0, sums / np.where(counts > 0, counts, 1), 0.0)
    devs = []
    for k in range(len(rows)):
        gidx = np.flatnonzero(G[k])
        if len(gidx) == 0:
            continue
        devs.append(float(np.mean(np.abs(values[k] - means[gidx]))) / span)
    if not devs:
        return 1.0, False
    return 1.0 - float(np.mean(devs)), True


def group_users(
    table: RatingsTable, coherence_cut: float = DEFAULT_COHERENCE_CUT
) -> dict[int, Nf2Group]:
    """Assign every user a (quantity, quality) group over this table."""
    users = table.user_ids()
    counts = np.array([len(table.user_rows(u)) for u in users], dtype=np.float64)
    q1 = float(np.quantile(counts, 1 / 3))
    q2 = float(np.quantile(counts, 2 / 3))
    groups: dict[int, Nf2Group] = {}
    for u, n in zip(users, counts):
        if n > q2:
            quantity = Quantity.HEAVY
        elif n <= q1:
            quantity = Quantity.LIGHT
        else:
            quantity = Quantity.MEDIUM
        coherence, had_genres = user_coherence(u, table)
        if not had_genres:
            logger.warning("user %d rated only genre-less items; quality defaults to easy", u)
            quality = Quality.EASY
        else:
            quality = Quality.EASY if coherence >= coherence_cut else Quality.DIFFICULT
        groups[u] = Nf2Group(quantity, quality)
    return groups


def nf2_group_user(
    user: int, table: RatingsTable, coherence_cut: float = DEFAULT_COHERENCE_CUT
) -> Nf2Group:
    group = group_users(table, coherence_cut).get(user)
    if group is None:
        raise ValueError(f"user {user} not in table")
    return group


def nf2_rnd(
    value: float,
    user_genre_means: Mapping[str, float] | Sequence[float],
    theta: float,
) -> float:
    """Share of countable genres with relative deviation >= theta.

    The caller passes means only for genres the user has history on; an
    empty map yields 0 (nothing to judge against).
    """
    if isinstance(user_genre_means, Mapping):
        means = list(user_genre_means.values())
    else:
        means = list(user_genre_means)
    if not means:
        return 0.0
    deviant = sum(1 for m in means if abs(value - m) / max(m, _EPS) >= theta)
    return deviant / len(means)


class Nf2Result(NamedTuple):
    verdicts: dict[tuple[int, int], Verdict]
    groups: dict[int, Nf2Group]
    rnd: dict[tuple[int, int], float]


def nf2_detect(
    test: RatingsTable,
    theta_heavy_medium: float = DEFAULT_THETA_HEAVY_MEDIUM,
    theta_light: float = DEFAULT_THETA_LIGHT,
    rnd_cut: float = DEFAULT_RND_CUT,
    context: RatingsTable | None = None,
    coherence_cut: float = DEFAULT_COHERENCE_CUT,
) -> Nf2Result:
    """Group-aware noisy-degree detector.

    Groups and genre means come from `context` (defaults to the test table).
    Genre means are leave-one-out: the rating under scrutiny is removed from
    its own genre means, and genres the user only knows through this very
    rating are skipped.  Medium-quantity users with easy (coherent) profiles
    are never flagged; everyone else is flagged when RND exceeds rnd_cut.
    """
    ctx = context if context is not None else test
    if ctx.genres is None:
        raise ValueError("genre vectors unavailable")
    groups = group_users(ctx, coherence_cut)
    genres = ctx.genres
    # per-user genre sums/counts over the context table
    stats: dict[int, tuple[np.ndarray, np.ndarray]] = {}
    verdicts: dict[tuple[int, int], Verdict] = {}
    rnd_values: dict[tuple[int, int], float] = {}
    for r in test:
        key = (r.user_id, r.item_id)
        group = groups.get(r.user_id)
        if group is None:
            group = nf2_group_user(r.user_id, test, coherence_cut)
            groups[r.user_id] = group
        if r.user_id not in stats:
            rows = ctx.user_rows(r.user_id)
            G = _genre_matrix(ctx, rows)
            if G.size == 0:
                G = np.zeros((0, genres.n_genres))
            stats[r.user_id] = (ctx.values[rows] @ G, G.sum(axis=0))
        gsum, gcount = stats[r.user_id]
        gvec = genres.vector(r.item_id)
        gidx = np.flatnonzero(gvec)
        own = ctx.has(r.user_id, r.item_id)
        means: list[float] = []
        for g in gidx:
            cnt = gcount[g] - (1 if own else 0)
            if cnt >= 1:
                means.append(float((gsum[g] - (r.value if own else 0.0)) / cnt))
        theta = theta_light if group.quantity is Quantity.LIGHT else theta_heavy_medium
        rnd = nf2_rnd(r.value, means, theta)
        rnd_values[key] = rnd
        if group.quantity is Quantity.MEDIUM and group.quality is Quality.EASY:
            verdicts[key] = Verdict.CLEAN
        else:
            verdicts[key] = Verdict.NOISY if rnd > rnd_cut else Verdict.CLEAN
    return Nf2Result(verdicts, groups, rnd_values)

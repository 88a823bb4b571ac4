"""Fuzzy-profile detector.

Ratings, users and items all live on a low/medium/high simplex.  When a
user's taste profile and an item's reception profile agree, a rating far
from both (Manhattan distance above 1 on either side, mapped to [0,1]) is
flagged.  Dissimilar user/item pairs give no basis to judge, so their
ratings pass.
"""

from __future__ import annotations

from typing import Callable, NamedTuple

import numpy as np

from ..dataset import RatingsTable, Scale
from .verdict import Verdict

DEFAULT_DELTA1 = 1.0
DEFAULT_DELTA2 = 0.25


class FuzzyProfile(NamedTuple):
    low: float
    medium: float
    high: float


def nf4_fuzzify(r: float, scale: Scale) -> FuzzyProfile:
    """Triangular membership over the scale: partition of unity in [0,1]^3."""
    if not scale.contains(r):
        raise ValueError(f"rating {r} outside scale [{scale.r_min}, {scale.r_max}]")
    t = (r - scale.r_min) / scale.span
    low = max(0.0, 1.0 - 2.0 * t)
    high = max(0.0, 2.0 * t - 1.0)
    medium = 1.0 - low - high
    return FuzzyProfile(low, medium, high)


def manhattan(a: FuzzyProfile, b: FuzzyProfile) -> float:
    """L1 distance between profiles; bounded by 2 on the simplex."""
    return abs(a.low - b.low) + abs(a.medium - b.medium) + abs(a.high - b.high)


def dissim(a: FuzzyProfile, b: FuzzyProfile) -> float:
    """Map Manhattan distance [1,2] to dissimilarity [0,1]; below 1 is 0."""
    return max(0.0, manhattan(a, b) - 1.0)


def _mean_profile(values: np.ndarray, scale: Scale) -> FuzzyProfile:
    t = (values - scale.r_min) / scale.span
    low = np.maximum(0.0, 1.0 - 2.0 * t)
    high = np.maximum(0.0, 2.0 * t - 1.0)
    medium = 1.0 - low - high
    return FuzzyProfile(float(low.mean()), float(medium.mean()), float(high.mean()))


class Nf4Result(NamedTuple):
    verdicts: dict[tuple[int, int], Verdict]
    noise_degree: dict[tuple[int, int], float]
    user_profiles: dict[int, FuzzyProfile]
    item_profiles: dict[int, FuzzyProfile]
    n_prefiltered: int


def nf4_detect(
    test: RatingsTable,
    delta1: float = DEFAULT_DELTA1,
    delta2: float = DEFAULT_DELTA2,
    context: RatingsTable | None = None,
    amplify: Callable[[FuzzyProfile], FuzzyProfile] | None = None,
) -> Nf4Result:
    """Flag ratings far from both their user's and their item's fuzzy profile.

    Profiles are arithmetic means of fuzzified ratings over `context`
    (defaults to the test table).  `amplify` is an optional hook applied to
    the aggregated user/item profiles; by default they are used as-is.
    Pairs with d(user, item) >= delta1 are prefiltered Clean; otherwise the
    noise degree is min(dissim(user, rating), dissim(item, rating)) and the
    rating is Noisy iff it exceeds delta2.
    """
    ctx = context if context is not None else test
    scale = test.scale
    user_profiles: dict[int, FuzzyProfile] = {}
    item_profiles: dict[int, FuzzyProfile] = {}
    for u in {int(x) for x in test.users}:
        rows = ctx.user_rows(u)
        values = ctx.values[rows] if len(rows) else test.values[test.user_rows(u)]
        profile = _mean_profile(values, scale)
        user_profiles[u] = amplify(profile) if amplify else profile
    for i in {int(x) for x in test.items}:
        rows = ctx.item_rows(i)
        values = ctx.values[rows] if len(rows) else test.values[test.item_rows(i)]
        profile = _mean_profile(values, scale)
        item_profiles[i] = amplify(profile) if amplify else profile
    verdicts: dict[tuple[int, int], Verdict] = {}
    degrees: dict[tuple[int, int], float] = {}
    prefiltered = 0
    for r in test:
        key = (r.user_id, r.item_id)
        up = user_profiles[r.user_id]
        ip = item_profiles[r.item_id]
        if manhattan(up, ip) >= delta1:
            prefiltered += 1
            degrees[key] = 0.0
            verdicts[key] = Verdict.CLEAN
            continue
        rp = nf4_fuzzify(r.value, scale)
        degree = min(dissim(up, rp), dissim(ip, rp))
        degrees[key] = degree
        verdicts[key] = Verdict.NOISY if degree > delta2 else Verdict.CLEAN
    return Nf4Result(verdicts, degrees, user_profiles, item_profiles, prefiltered)

"""User-item class detector.

Users, items, and individual ratings are each sorted into weak/average/strong
style classes by counting which side of two cut-points the ratings fall on.
A rating is flagged when user and item classes form one of the three
homologous combinations but the rating's own class breaks the pattern.
"""

from __future__ import annotations

from enum import Enum
from typing import Iterable, NamedTuple

from ..dataset import RatingsTable
from .verdict import Verdict


class UserClass(Enum):
    CRITICAL = "critical"
    AVERAGE = "average"
    BENEVOLENT = "benevolent"
    VARIABLE = "variable"


class ItemClass(Enum):
    WEAKLY_PREFERRED = "weakly_preferred"
    AVERAGELY_PREFERRED = "averagely_preferred"
    STRONGLY_PREFERRED = "strongly_preferred"
    VARIABLY_PREFERRED = "variably_preferred"


class RatingClass(Enum):
    WEAK = "weak"
    AVERAGE = "average"
    STRONG = "strong"


class Nf1Classes(NamedTuple):
    user_class: UserClass
    item_class: ItemClass
    rating_class: RatingClass


DEFAULT_CUTS = (2.5, 4.0)
DEFAULT_MAJORITY = 0.5

# user class x item class -> the rating class a conforming rating must have
HOMOLOGOUS = {
    (UserClass.CRITICAL, ItemClass.WEAKLY_PREFERRED): RatingClass.WEAK,
    (UserClass.AVERAGE, ItemClass.AVERAGELY_PREFERRED): RatingClass.AVERAGE,
    (UserClass.BENEVOLENT, ItemClass.STRONGLY_PREFERRED): RatingClass.STRONG,
}


def classify_rating(value: float, cuts: tuple[float, float] = DEFAULT_CUTS) -> RatingClass:
    """Weak [r_min, c1), Average [c1, c2), Strong [c2, r_max]."""
    c1, c2 = cuts
    if value < c1:
        return RatingClass.WEAK
    if value < c2:
        return RatingClass.AVERAGE
    return RatingClass.STRONG


def _set_counts(values: Iterable[float], cuts: tuple[float, float]) -> tuple[int, int, int]:
    w = a = s = 0
    for v in values:
        cls = classify_rating(v, cuts)
        if cls is RatingClass.WEAK:
            w += 1
        elif cls is RatingClass.AVERAGE:
            a += 1
        else:
            s += 1
    return w, a, s


def nf1_classify_user(
    user_ratings: Iterable[float],
    cuts: tuple[float, float] = DEFAULT_CUTS,
    majority: float = DEFAULT_MAJORITY,
) -> UserClass:
    """Class of the set (weak/average/strong) strictly exceeding majority*n, else Variable."""
    w, a, s = _set_counts(user_ratings, cuts)
    n = w + a + s
    if n == 0:
        raise ValueError("empty rating list")
    if w > majority * n:
        return UserClass.CRITICAL
    if a > majority * n:
        return UserClass.AVERAGE
    if s > majority * n:
        return UserClass.BENEVOLENT
    return UserClass.VARIABLE


def nf1_classify_item(
    item_ratings: Iterable[float],
    cuts: tuple[float, float] = DEFAULT_CUTS,
    majority: float = DEFAULT_MAJORITY,
) -> ItemClass:
    w, a, s = _set_counts(item_ratings, cuts)
    n = w + a + s
    if n == 0:
        raise ValueError("empty rating list")
    if w > majority * n:
        return ItemClass.WEAKLY_PREFERRED
    if a > majority * n:
        return ItemClass.AVERAGELY_PREFERRED
    if s > majority * n:
        return ItemClass.STRONGLY_PREFERRED
    return ItemClass.VARIABLY_PREFERRED


class Nf1Result(NamedTuple):
    verdicts: dict[tuple[int, int], Verdict]
    user_classes: dict[int, UserClass]
    item_classes: dict[int, ItemClass]


def nf1_detect(
    test: RatingsTable,
    cuts: tuple[float, float] = DEFAULT_CUTS,
    majority: float = DEFAULT_MAJORITY,
    context: RatingsTable | None = None,
) -> Nf1Result:
    """Flag ratings that contradict a homologous user/item class pair.

    Classes are computed over `context` (all available evidence, defaulting
    to the test table itself); verdicts are emitted for test ratings only.
    Ratings whose (user, item) classes form no homologous pair are Clean.
    """
    ctx = context if context is not None else test
    user_classes: dict[int, UserClass] = {}
    item_classes: dict[int, ItemClass] = {}
    for u in {int(u) for u in test.users}:
        rows = ctx.user_rows(u)
        values = ctx.values[rows] if len(rows) else test.values[test.user_rows(u)]
        user_classes[u] = nf1_classify_user(values, cuts, majority)
    for i in {int(i) for i in test.items}:
        rows = ctx.item_rows(i)
        values = ctx.values[rows] if len(rows) else test.values[test.item_rows(i)]
        item_classes[i] = nf1_classify_item(values, cuts, majority)
    verdicts: dict[tuple[int, int], Verdict] = {}
    for r in test:
        expected = HOMOLOGOUS.get((user_classes[r.user_id], item_classes[r.item_id]))
        if expected is not None and classify_rating(r.value, cuts) is not expected:
            verdicts[(r.user_id, r.item_id)] = Verdict.NOISY
        else:
            verdicts[(r.user_id, r.item_id)] = Verdict.CLEAN
    return Nf1Result(verdicts, user_classes, item_classes)

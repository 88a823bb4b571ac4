"""Ranking metrics at cutoff K with binary relevance."""

from __future__ import annotations

import math
from typing import Iterable, NamedTuple

from ..recsys import TopKList


class RankingMetrics(NamedTuple):
    ndcg: float
    precision: float
    recall: float
    f1: float


def ranking_metrics(recs: TopKList, relevant: set[int], K: int) -> RankingMetrics:
    """nDCG, precision, recall, F1 over the first K recommended items.

    DCG credits a hit at position i (1-based) with 1/log2(i+1); the ideal
    ranking places min(K, |relevant|) hits first.  Precision divides by K
    regardless of how many items were actually recommended; recall of an
    empty relevant set is 0.
    """
    if K < 1:
        raise ValueError("K must be >= 1")
    items = [item for item, _ in recs.items[:K]]
    hits = sum(1 for item in items if item in relevant)
    dcg = sum(1.0 / math.log2(i + 1) for i, item in enumerate(items, start=1) if item in relevant)
    ideal = min(K, len(relevant))
    idcg = sum(1.0 / math.log2(i + 1) for i in range(1, ideal + 1))
    ndcg = dcg / idcg if idcg > 0 else 0.0
    precision = hits / K
    recall = hits / len(relevant) if relevant else 0.0
    f1 = (2 * precision * recall / (precision + recall)) if (precision + recall) > 0 else 0.0
    return RankingMetrics(ndcg, precision, recall, f1)


def mean_or_zero(values: Iterable[float]) -> float:
    values = list(values)
    return sum(values) / len(values) if values else 0.0

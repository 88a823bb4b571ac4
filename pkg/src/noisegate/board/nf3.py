"""Accuracy-centered detector.

A rating disagreeing too strongly with its own kNN prediction is flagged.
Disagreement is measured as |r - p| normalized by the scale span, so the
threshold means the same thing on any rating scale.
"""

from __future__ import annotations

from typing import NamedTuple

from ..dataset import RatingsTable
from ..recsys import KnnConfig, SimilarityMatrix, knn_predict
from .verdict import Verdict

DEFAULT_TH = 0.05


def consistency(value: float, prediction: float, scale) -> float:
    """Normalized absolute prediction error, in [0, 1]."""
    return abs(value - prediction) / scale.span


class Nf3Result(NamedTuple):
    verdicts: dict[tuple[int, int], Verdict]
    consistency: dict[tuple[int, int], float | None]
    predictions: dict[tuple[int, int], float | None]
    n_unpredictable: int


def nf3_detect(
    train: RatingsTable,
    test: RatingsTable,
    cfg: KnnConfig = KnnConfig(),
    th: float = DEFAULT_TH,
) -> Nf3Result:
    """Flag test ratings whose normalized kNN prediction error exceeds th.

    Ratings the predictor cannot reach (user absent from train, item unrated
    by any neighbor, all-zero similarities) are Clean and counted as
    unpredictable: no evidence is not evidence of noise.
    """
    sims = SimilarityMatrix(train, cfg) if len(train) else None
    verdicts: dict[tuple[int, int], Verdict] = {}
    cons: dict[tuple[int, int], float | None] = {}
    preds: dict[tuple[int, int], float | None] = {}
    unpredictable = 0
    for r in test:
        key = (r.user_id, r.item_id)
        if sims is None or len(train.user_rows(r.user_id)) == 0:
            pred = None
        else:
            pred = knn_predict(train, r.user_id, r.item_id, cfg, sims=sims)
        preds[key] = pred
        if pred is None:
            unpredictable += 1
            cons[key] = None
            verdicts[key] = Verdict.CLEAN
        else:
            c = consistency(r.value, pred, test.scale)
            cons[key] = c
            verdicts[key] = Verdict.NOISY if c > th else Verdict.CLEAN
    return Nf3Result(verdicts, cons, preds, unpredictable)

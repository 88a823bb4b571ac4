"""Bagged self-training with out-of-bag early stopping.

Each bag bootstraps the labeled set, trains a base classifier, then
repeatedly pseudo-labels its most confident unlabeled points and retrains.
A bag stops growing the moment its out-of-bag error would increase, so the
accepted-step OOB sequence is non-increasing by construction.  With no
unlabeled data the procedure is exactly plain bagging.
"""

from __future__ import annotations

import logging
from typing import Callable, Sequence

import numpy as np

from ..seeding import derive_seed
from .learners import GaussianNB, KnnClassifier, MarginClassifier, SgdLogLoss
from .trees import DecisionTree

logger = logging.getLogger("noisegate.ensemble.ressel")

Factory = Callable[[int], object]

DEFAULT_BAGS = 25
DEFAULT_ADD_PER_ROUND = 10
DEFAULT_MAX_ROUNDS = 20


def base_roster(spec: str | Sequence[Factory]) -> list[Factory]:
    """Resolve a base-classifier spec into a list of seed -> classifier factories."""
    if not isinstance(spec, str):
        return list(spec)
    if spec == "EL4_1":
        return [
            lambda s: _SqrtTree(max_depth=4, seed=s),
            lambda s: SgdLogLoss(seed=s),
        ]
    if spec == "EL4_2":
        return [
            lambda s: _SqrtTree(max_depth=4, seed=s),
            lambda s: SgdLogLoss(seed=s),
            lambda s: GaussianNB(seed=s),
            lambda s: MarginClassifier(seed=s),
            lambda s: KnnClassifier(k=10, seed=s),
        ]
    raise ValueError(f"unknown base roster {spec!r}")


class _SqrtTree(DecisionTree):
    """Shallow random tree: depth-limited, sqrt(d) features per split."""

    def fit(self, X: np.ndarray, y: np.ndarray) -> "DecisionTree":
        self.feature_subset = max(1, int(np.sqrt(np.asarray(X).shape[1])))
        return super().fit(X, y)


class ResselModel:
    def __init__(self, classifiers: list, oob_sequences: list[list[float]], variant: str):
        self.classifiers = classifiers
        self.oob_sequences = oob_sequences
        self.variant = variant

    def _votes(self, X: np.ndarray) -> np.ndarray:
        votes = np.zeros(len(X))
        for clf in self.classifiers:
            votes += clf.predict(X)
        return votes

    def predict(self, X: np.ndarray) -> np.ndarray:
        return (self._votes(X) > len(self.classifiers) / 2.0).astype(np.int64)

    def predict_proba(self, X: np.ndarray) -> np.ndarray:
        return self._votes(X) / len(self.classifiers)


def _fit_fresh(factory: Factory, clf_seed: int, X: np.ndarray, y: np.ndarray):
    clf = factory(clf_seed)
    clf.fit(X, y)
    return clf


def _oob_error(clf, X: np.ndarray, y: np.ndarray, oob: np.ndarray) -> float:
    pred = clf.predict(X[oob])
    return float(np.mean(pred != y[oob]))


def train_bagging(
    X: np.ndarray,
    y: np.ndarray,
    base: str | Sequence[Factory] = "EL4_1",
    bags: int = DEFAULT_BAGS,
    seed: int = 0,
) -> ResselModel:
    """Plain bagging of the base roster; the no-unlabeled reference model."""
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    roster = base_roster(base)
    classifiers = []
    for b in range(bags):
        rng = np.random.default_rng(derive_seed(seed, b))
        idx = rng.integers(0, len(y), size=len(y))
        clf = _fit_fresh(roster[b % len(roster)], derive_seed(seed, b, 1), X[idx], y[idx])
        classifiers.append(clf)
    return ResselModel(classifiers, [], "bagging")


def train_ressel(
    X_labeled: np.ndarray,
    y: np.ndarray,
    X_unlabeled: np.ndarray,
    base: str | Sequence[Factory] = "EL4_1",
    bags: int = DEFAULT_BAGS,
    add_per_round: int = DEFAULT_ADD_PER_ROUND,
    seed: int = 0,
    max_rounds: int | None = DEFAULT_MAX_ROUNDS,
) -> ResselModel:
    """Self-training bag ensemble with OOB-guarded growth.

    Per round a bag adds its add_per_round most confident unlabeled points,
    class-balanced by predicted label; the candidate step is kept only when
    the bag's OOB error does not increase.  max_rounds caps the number of
    self-training rounds per bag (None removes the cap).
    """
    X_labeled = np.asarray(X_labeled, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    X_unlabeled = np.asarray(X_unlabeled, dtype=np.float64)
    if len(X_unlabeled) == 0:
        logger.warning("empty unlabeled set: self-training reduces to plain bagging")
        model = train_bagging(X_labeled, y, base, bags, seed)
        return ResselModel(model.classifiers, [], _variant_tag(base))
    roster = base_roster(base)
    n = len(y)
    classifiers = []
    sequences: list[list[float]] = []
    n_half = add_per_round // 2
    take = {0: n_half, 1: add_per_round - n_half}
    for b in range(bags):
        rng = np.random.default_rng(derive_seed(seed, b))
        idx = rng.integers(0, n, size=n)
        clf_seed = derive_seed(seed, b, 1)
        factory = roster[b % len(roster)]
        clf = _fit_fresh(factory, clf_seed, X_labeled[idx], y[idx])
        oob = np.setdiff1d(np.arange(n), idx)
        if len(oob) == 0:
            logger.warning("bag %d has no OOB samples; skipping self-training", b)
            classifiers.append(clf)
            sequences.append([])
            continue
        e_prev = _oob_error(clf, X_labeled, y, oob)
        seq = [e_prev]
        pool = np.arange(len(X_unlabeled))
        accepted_X: list[np.ndarray] = []
        accepted_y: list[np.ndarray] = []
        rounds = 0
        while len(pool) and (max_rounds is None or rounds < max_rounds):
            rounds += 1
            proba = clf.predict_proba(X_unlabeled[pool])
            pred = (proba > 0.5).astype(np.int64)
            conf = np.abs(proba - 0.5)
            batch_positions: list[int] = []
            for c in (0, 1):
                cand = np.flatnonzero(pred == c)
                order = np.lexsort((pool[cand], -conf[cand]))
                batch_positions.extend(cand[order[: take[c]]].tolist())
            if not batch_positions:
                break
            batch = np.array(sorted(batch_positions))
            bx = X_unlabeled[pool[batch]]
            by = pred[batch]
            trial_X = np.vstack([X_labeled[idx]] + accepted_X + [bx])
            trial_y = np.concatenate([y[idx]] + accepted_y + [by])
            clf2 = _fit_fresh(factory, clf_seed, trial_X, trial_y)
            e_new = _oob_error(clf2, X_labeled, y, oob)
            if e_new > e_prev:
                break
            clf = clf2
            e_prev = e_new
            seq.append(e_new)
            accepted_X.append(bx)
            accepted_y.append(by)
            pool = np.delete(pool, batch)
        classifiers.append(clf)
        sequences.append(seq)
    return ResselModel(classifiers, sequences, _variant_tag(base))


def _variant_tag(base: str | Sequence[Factory]) -> str:
    return base if isinstance(base, str) else "EL4_custom"

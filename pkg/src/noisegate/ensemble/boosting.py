"""Gradient-boosted trees on the logistic loss."""

from __future__ import annotations

import numpy as np

from .trees import RegressionTree


def _sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z, dtype=np.float64)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def _log_loss(y: np.ndarray, p: np.ndarray) -> float:
    p = np.clip(p, 1e-12, 1.0 - 1e-12)
    return float(-np.mean(y * np.log(p) + (1.0 - y) * np.log(1.0 - p)))


class GbtModel:
    """Additive model: prior log-odds plus lr-scaled Newton-leaf trees.

    Class is the sign of the raw score; probabilities go through a sigmoid.
    """

    def __init__(self, base_score: float, trees: list[RegressionTree], lr: float,
                 loss_curve: list[float]):
        self.base_score = base_score
        self.trees = trees
        self.lr = lr
        self.loss_curve = loss_curve

    def decision_function(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        score = np.full(len(X), self.base_score)
        for tree in self.trees:
            score += self.lr * tree.predict(X)
        return score

    def predict(self, X: np.ndarray) -> np.ndarray:
        return (self.decision_function(X) > 0.0).astype(np.int64)

    def predict_proba(self, X: np.ndarray) -> np.ndarray:
        return _sigmoid(self.decision_function(X))


def train_gbt(
    X: np.ndarray,
    y: np.ndarray,
    rounds: int = 100,
    depth: int = 3,
    lr: float = 0.1,
    seed: int = 0,
) -> GbtModel:
    """Boost depth-limited regression trees on logistic-loss gradients.

    Round t fits a tree to the residual y - p and steps each leaf by the
    Newton estimate sum(g)/sum(p(1-p)).  With rounds=0 the model is the
    prior log-odds, so it predicts the majority class; lr=0 freezes the
    score at that prior.  Training log-loss is recorded per round.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    p1 = float(np.clip(y.mean(), 1e-12, 1.0 - 1e-12))
    base = float(np.log(p1 / (1.0 - p1)))
    score = np.full(len(y), base)
    trees: list[RegressionTree] = []
    losses: list[float] = [_log_loss(y, _sigmoid(score))]
    for _ in range(rounds):
        p = _sigmoid(score)
        g = y - p
        h = p * (1.0 - p)
        if not (np.all(np.isfinite(g)) and np.all(np.isfinite(h))):
            raise RuntimeError(f"non-finite gradient at round {len(trees)}")
        tree = RegressionTree(max_depth=depth)
        tree.fit(X, g, h)
        trees.append(tree)
        score = score + lr * tree.predict(X)
        losses.append(_log_loss(y, _sigmoid(score)))
    return GbtModel(base, trees, lr, losses)

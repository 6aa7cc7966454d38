"""Gradient-boosted trees with logistic loss and Newton leaf values."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .dataset import Dataset
from .linear import _sigmoid
from .tree import DecisionTree, fit_regression_tree

HESSIAN_EPS = 1e-9


@dataclass(frozen=True)
class GbtParams:
    learning_rate: float = 0.1
    n_rounds: int = 100
    max_depth: int = 3
    min_leaf: int = 1

    def __post_init__(self):
        if not (0.0 < self.learning_rate <= 1.0):
            raise ValueError("learning_rate must be in (0, 1]")
        if self.n_rounds < 0:
            raise ValueError("n_rounds must be non-negative")


@dataclass
class GbtModel:
    trees: list[DecisionTree]
    learning_rate: float
    n_rounds: int
    max_depth: int
    base_score: float  # log-odds of the training class prior
    train_losses: list[float]  # mean BCE after 0..n_rounds rounds

    def predict_margin(self, X: np.ndarray) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        margin = np.full(X.shape[0], self.base_score)
        for tree in self.trees:
            margin += self.learning_rate * tree.predict_value(X)
        return margin

    def predict_proba(self, X: np.ndarray) -> np.ndarray:
        return _sigmoid(self.predict_margin(X))

    def predict(self, X: np.ndarray, threshold: float = 0.5) -> np.ndarray:
        return (self.predict_proba(X) >= threshold).astype(np.int64)

    def to_dict(self) -> dict:
        return {
            "learning_rate": self.learning_rate,
            "n_rounds": self.n_rounds,
            "max_depth": self.max_depth,
            "base_score": self.base_score,
            "train_losses": self.train_losses,
            "trees": [t.to_dict() for t in self.trees],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "GbtModel":
        return cls(
            trees=[DecisionTree.from_dict(t) for t in data["trees"]],
            learning_rate=float(data["learning_rate"]),
            n_rounds=int(data["n_rounds"]),
            max_depth=int(data["max_depth"]),
            base_score=float(data["base_score"]),
            train_losses=list(data["train_losses"]),
        )


def _mean_bce(y: np.ndarray, margin: np.ndarray) -> float:
    return float(np.mean(np.logaddexp(0.0, margin) - y * margin))


def fit_gbt(ds: Dataset, p: GbtParams = GbtParams()) -> GbtModel:
    """Boost squared-error trees on the logistic-loss residuals y - p.

    Each leaf takes the damped Newton value sum(residual)/(sum(p(1-p)) + eps);
    with n_rounds = 0 the model predicts the class prior everywhere.
    """
    ds.require_trainable()
    y = ds.y.astype(np.float64)
    prior = float(y.mean())
    base = math.log(prior / (1.0 - prior))
    margin = np.full(ds.n, base)
    losses = [_mean_bce(y, margin)]

    trees: list[DecisionTree] = []
    for _ in range(p.n_rounds):
        prob = _sigmoid(margin)
        resid = y - prob
        hess = prob * (1.0 - prob)

        def newton_leaf(idx: np.ndarray) -> float:
            return float(resid[idx].sum() / (hess[idx].sum() + HESSIAN_EPS))

        tree = fit_regression_tree(
            ds.X, resid, p.max_depth, p.min_leaf, leaf_value_fn=newton_leaf
        )
        margin = margin + p.learning_rate * tree.predict_value(ds.X)
        trees.append(tree)
        losses.append(_mean_bce(y, margin))

    return GbtModel(
        trees=trees,
        learning_rate=p.learning_rate,
        n_rounds=p.n_rounds,
        max_depth=p.max_depth,
        base_score=base,
        train_losses=losses,
    )

"""Bagged random forests over the CART trees."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .dataset import Dataset
from .tree import DecisionTree, fit_tree


@dataclass(frozen=True)
class ForestParams:
    n_trees: int = 100
    max_depth: int = 12
    min_leaf: int = 2
    features_per_split: int | None = None  # None -> ceil(sqrt(d))
    bootstrap: bool = True
    seed: int = 0
    soft_vote: bool = True  # mean of leaf probabilities; False -> hard majority

    def __post_init__(self):
        if self.n_trees < 1 or self.max_depth < 1 or self.min_leaf < 1:
            raise ValueError("n_trees, max_depth, min_leaf must be positive")


class RandomForest:
    def __init__(self, trees: list[DecisionTree], params: ForestParams):
        self.trees = trees
        self.params = params

    def predict_proba(self, X: np.ndarray) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        # Sequential accumulation keeps results bit-identical whether rows
        # are scored one at a time or in a batch.
        acc = np.zeros(X.shape[0])
        for tree in self.trees:
            value = tree.predict_value(X)
            acc += value if self.params.soft_vote else (value > 0.5).astype(np.float64)
        return acc / len(self.trees)

    def predict(self, X: np.ndarray, threshold: float = 0.5) -> np.ndarray:
        return (self.predict_proba(X) >= threshold).astype(np.int64)

    def to_dict(self) -> dict:
        return {
            "params": {
                "n_trees": self.params.n_trees,
                "max_depth": self.params.max_depth,
                "min_leaf": self.params.min_leaf,
                "features_per_split": self.params.features_per_split,
                "bootstrap": self.params.bootstrap,
                "seed": self.params.seed,
                "soft_vote": self.params.soft_vote,
            },
            "trees": [t.to_dict() for t in self.trees],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "RandomForest":
        return cls(
            trees=[DecisionTree.from_dict(t) for t in data["trees"]],
            params=ForestParams(**data["params"]),
        )


def fit_forest(ds: Dataset, p: ForestParams) -> RandomForest:
    """Fit n_trees CART trees on bootstrap resamples with per-split feature
    sampling. Tree t owns the RNG stream seeded by (p.seed, t), so results
    do not depend on fitting order.
    """
    ds.require_trainable()
    d = ds.d
    k = p.features_per_split if p.features_per_split is not None else math.ceil(math.sqrt(d))
    if k > d:
        raise ValueError("features_per_split exceeds the feature count")

    def subset_rule(rng: np.random.Generator, n_features: int):
        return rng.choice(n_features, size=k, replace=False)

    trees: list[DecisionTree] = []
    for t in range(p.n_trees):
        rng = np.random.default_rng([p.seed, t])
        if p.bootstrap:
            idx = rng.integers(0, ds.n, size=ds.n)
        else:
            idx = np.arange(ds.n)
        sample = Dataset(ds.X[idx], ds.y[idx], ds.feature_names)
        trees.append(
            fit_tree(sample, p.max_depth, p.min_leaf, feature_subset_rule=subset_rule, rng=rng)
        )
    return RandomForest(trees, p)

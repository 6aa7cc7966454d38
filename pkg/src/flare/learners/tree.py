"""CART trees: Gini classification and squared-error regression growth.

Split candidates are midpoints between consecutive sorted unique feature
values. The chosen split strictly maximizes the criterion gain; ties break
toward the lowest feature index, then the lowest threshold.
"""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from .dataset import Dataset

# A feature-subset rule receives (rng, n_features) and returns the candidate
# feature indices for one split.
SubsetRule = Callable[[np.random.Generator, int], Sequence[int]]


class DecisionTree:
    """Binary tree over flat node arrays.

    ``feature[i] < 0`` marks node i as a leaf; ``value[i]`` is the leaf
    output (positive-class fraction for classification, additive value for
    regression). Samples with x[feature] <= threshold go left.
    """

    def __init__(
        self,
        feature: np.ndarray,
        threshold: np.ndarray,
        left: np.ndarray,
        right: np.ndarray,
        value: np.ndarray,
        n_features: int,
    ):
        self.feature = feature
        self.threshold = threshold
        self.left = left
        self.right = right
        self.value = value
        self.n_features = n_features

    @property
    def n_nodes(self) -> int:
        return len(self.feature)

    def predict_value(self, X: np.ndarray) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        idx = np.zeros(X.shape[0], dtype=np.int64)
        while True:
            internal = self.feature[idx] >= 0
            if not internal.any():
                break
            f = np.where(internal, self.feature[idx], 0)
            go_left = X[np.arange(X.shape[0]), f] <= self.threshold[idx]
            nxt = np.where(go_left, self.left[idx], self.right[idx])
            idx = np.where(internal, nxt, idx)
        return self.value[idx]

    def predict_proba(self, X: np.ndarray) -> np.ndarray:
        return self.predict_value(X)

    def leaf_indices(self, X: np.ndarray) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        idx = np.zeros(X.shape[0], dtype=np.int64)
        while True:
            internal = self.feature[idx] >= 0
            if not internal.any():
                break
            f = np.where(internal, self.feature[idx], 0)
            go_left = X[np.arange(X.shape[0]), f] <= self.threshold[idx]
            nxt = np.where(go_left, self.left[idx], self.right[idx])
            idx = np.where(internal, nxt, idx)
        return idx

    def to_dict(self) -> dict:
        return {
            "n_features": self.n_features,
            "feature": self.feature.tolist(),
            "threshold": [None if f < 0 else t for f, t in zip(self.feature, self.threshold)],
            "left": self.left.tolist(),
            "right": self.right.tolist(),
            "value": self.value.tolist(),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "DecisionTree":
        thr = np.array(
            [np.nan if t is None else t for t in data["threshold"]], dtype=np.float64
        )
        return cls(
            feature=np.array(data["feature"], dtype=np.int64),
            threshold=thr,
            left=np.array(data["left"], dtype=np.int64),
            right=np.array(data["right"], dtype=np.int64),
            value=np.array(data["value"], dtype=np.float64),
            n_features=int(data["n_features"]),
        )


def gini_impurity(pos: float, n: float) -> float:
    p = pos / n
    q = 1.0 - p
    return 1.0 - p * p - q * q


def best_split_gini(
    X: np.ndarray, y: np.ndarray, feat_indices: Sequence[int], min_leaf: int
) -> tuple[int, float] | None:
    """Best (feature, threshold) by Gini gain, or None when no split improves."""
    n = len(y)
    parent_pos = float(y.sum())
    parent = gini_impurity(parent_pos, n)
    best_gain = 0.0
    best: tuple[int, float] | None = None
    for f in sorted(feat_indices):
        order = np.argsort(X[:, f], kind="stable")
        xs = X[order, f]
        ys = y[order]
        boundaries = np.nonzero(xs[1:] != xs[:-1])[0]
        if boundaries.size == 0:
            continue
        n_left = boundaries + 1
        n_right = n - n_left
        ok = (n_left >= min_leaf) & (n_right >= min_leaf)
        boundaries = boundaries[ok]
        if boundaries.size == 0:
            continue
        n_left = n_left[ok]
        n_right = n_right[ok]
        pos_prefix = np.cumsum(ys)
        pos_left = pos_prefix[boundaries].astype(np.float64)
        pos_right = parent_pos - pos_left
        p_l = pos_left / n_left
        p_r = pos_right / n_right
        gini_l = 1.0 - p_l * p_l - (1.0 - p_l) * (1.0 - p_l)
        gini_r = 1.0 - p_r * p_r - (1.0 - p_r) * (1.0 - p_r)
        gain = parent - (n_left / n) * gini_l - (n_right / n) * gini_r
        j = int(np.argmax(gain))
        if gain[j] > best_gain:
            best_gain = float(gain[j])
            thr = (xs[boundaries[j]] + xs[boundaries[j] + 1]) / 2.0
            best = (f, float(thr))
    return best


def best_split_sse(
    X: np.ndarray, y: np.ndarray, feat_indices: Sequence[int], min_leaf: int
) -> tuple[int, float] | None:
    """Best (feature, threshold) by squared-error reduction on real targets."""
    n = len(y)
    total = float(y.sum())
    parent_sse = float(np.sum(y * y)) - total * total / n
    best_gain = 0.0
    best: tuple[int, float] | None = None
    for f in sorted(feat_indices):
        order = np.argsort(X[:, f], kind="stable")
        xs = X[order, f]
        ys = y[order]
        boundaries = np.nonzero(xs[1:] != xs[:-1])[0]
        if boundaries.size == 0:
            continue
        n_left = boundaries + 1
        n_right = n - n_left
        ok = (n_left >= min_leaf) & (n_right >= min_leaf)
        boundaries = boundaries[ok]
        if boundaries.size == 0:
            continue
        n_left = n_left[ok]
        n_right = n_right[ok]
        sum_prefix = np.cumsum(ys)
        sq_prefix = np.cumsum(ys * ys)
        sum_l = sum_prefix[boundaries]
        sq_l = sq_prefix[boundaries]
        sse_l = sq_l - sum_l * sum_l / n_left
        sum_r = total - sum_l
        sq_r = sq_prefix[-1] - sq_l
        sse_r = sq_r - sum_r * sum_r / n_right
        gain = parent_sse - sse_l - sse_r
        j = int(np.argmax(gain))
        if gain[j] > best_gain:
            best_gain = float(gain[j])
            thr = (xs[boundaries[j]] + xs[boundaries[j] + 1]) / 2.0
            best = (f, float(thr))
    return best


class _TreeBuilder:
    def __init__(self):
        self.feature: list[int] = []
        self.threshold: list[float] = []
        self.left: list[int] = []
        self.right: list[int] = []
        self.value: list[float] = []
        self.leaf_samples: list[np.ndarray | None] = []

    def add(self) -> int:
        self.feature.append(-1)
        self.threshold.append(np.nan)
        self.left.append(-1)
        self.right.append(-1)
        self.value.append(0.0)
        self.leaf_samples.append(None)
        return len(self.feature) - 1


def _grow(
    builder: _TreeBuilder,
    X: np.ndarray,
    y: np.ndarray,
    idx: np.ndarray,
    depth: int,
    max_depth: int,
    min_leaf: int,
    split_fn,
    leaf_value_fn,
    subset_rule: SubsetRule | None,
    rng: np.random.Generator | None,
) -> int:
    node = builder.add()
    sub_y = y[idx]
    stop = (
        depth >= max_depth
        or len(idx) < 2 * min_leaf
        or float(sub_y.min()) == float(sub_y.max())
    )
    split = None
    if not stop:
        d = X.shape[1]
        if subset_rule is None:
            feats: Sequence[int] = range(d)
        else:
            feats = subset_rule(rng, d)
        split = split_fn(X[idx], sub_y, feats, min_leaf)
    if split is None:
        builder.value[node] = leaf_value_fn(idx)
        builder.leaf_samples[node] = idx
        return node
    f, thr = split
    go_left = X[idx, f] <= thr
    builder.feature[node] = f
    builder.threshold[node] = thr
    builder.left[node] = _grow(
        builder, X, y, idx[go_left], depth + 1, max_depth, min_leaf,
        split_fn, leaf_value_fn, subset_rule, rng,
    )
    builder.right[node] = _grow(
        builder, X, y, idx[~go_left], depth + 1, max_depth, min_leaf,
        split_fn, leaf_value_fn, subset_rule, rng,
    )
    return node


def _build_tree(
    X: np.ndarray,
    y: np.ndarray,
    max_depth: int,
    min_leaf: int,
    split_fn,
    leaf_value_fn,
    subset_rule: SubsetRule | None,
    rng: np.random.Generator | None,
) -> DecisionTree:
    builder = _TreeBuilder()
    _grow(
        builder, X, y, np.arange(len(y)), 0, max_depth, min_leaf,
        split_fn, leaf_value_fn, subset_rule, rng,
    )
    return DecisionTree(
        feature=np.array(builder.feature, dtype=np.int64),
        threshold=np.array(builder.threshold, dtype=np.float64),
        left=np.array(builder.left, dtype=np.int64),
        right=np.array(builder.right, dtype=np.int64),
        value=np.array(builder.value, dtype=np.float64),
        n_features=X.shape[1],
    )


def fit_tree(
    ds: Dataset,
    max_depth: int = 12,
    min_leaf: int = 2,
    feature_subset_rule: SubsetRule | None = None,
    rng: np.random.Generator | None = None,
) -> DecisionTree:
    """Grow a Gini classification tree; leaves hold the positive fraction.

    A node with no impurity-reducing split becomes a leaf; a pure dataset
    yields a single leaf (bootstrap resamples may be single-class).
    """
    if ds.n < 1:
        raise ValueError("empty dataset")
    y = ds.y.astype(np.float64)
    return _build_tree(
        ds.X, ds.y, max_depth, min_leaf,
        split_fn=best_split_gini,
        leaf_value_fn=lambda idx: float(y[idx].mean()),
        subset_rule=feature_subset_rule,
        rng=rng,
    )


def fit_regression_tree(
    X: np.ndarray,
    targets: np.ndarray,
    max_depth: int,
    min_leaf: int,
    leaf_value_fn,
    subset_rule: SubsetRule | None = None,
    rng: np.random.Generator | None = None,
) -> DecisionTree:
    """Squared-error tree on real targets; leaf values come from the callback.

    ``leaf_value_fn(sample_indices)`` lets the caller install e.g. Newton
    step values instead of plain means.
    """
    return _build_tree(
        np.asarray(X, dtype=np.float64),
        np.asarray(targets, dtype=np.float64),
        max_depth, min_leaf,
        split_fn=best_split_sse,
        leaf_value_fn=leaf_value_fn,
        subset_rule=subset_rule,
        rng=rng,
    )

"""Stratified k-fold splitting and exhaustive grid search."""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from ..errors import TooFewSamplesError
from .dataset import Dataset


def stratified_indices(y: np.ndarray, k: int, rng: np.random.Generator) -> list[np.ndarray]:
    """Shuffle each class and deal it into k folds; fold class counts differ
    from exact proportionality by at most one sample."""
    folds: list[list[int]] = [[] for _ in range(k)]
    for cls in np.unique(y):
        members = np.flatnonzero(y == cls)
        if len(members) < k:
            raise TooFewSamplesError(
                f"class {cls} has {len(members)} samples, need at least k={k}"
            )
        members = members[rng.permutation(len(members))]
        base, extra = divmod(len(members), k)
        pos = 0
        for f in range(k):
            take = base + (1 if f < extra else 0)
            folds[f].extend(members[pos : pos + take].tolist())
            pos += take
    return [np.array(sorted(f), dtype=np.int64) for f in folds]


def stratified_kfold(ds: Dataset, k: int, seed: int) -> list[np.ndarray]:
    """k disjoint index folds covering the dataset, stratified by class."""
    if k < 2:
        raise ValueError("k must be at least 2")
    return stratified_indices(ds.y, k, np.random.default_rng(seed))


def binary_f1(y_true: np.ndarray, y_pred: np.ndarray) -> float:
    tp = int(np.sum((y_true == 1) & (y_pred == 1)))
    fp = int(np.sum((y_true == 0) & (y_pred == 1)))
    fn = int(np.sum((y_true == 1) & (y_pred == 0)))
    if 2 * tp + fp + fn == 0:
        return 0.0
    return 2 * tp / (2 * tp + fp + fn)


def expand_grid(grid: dict[str, Sequence]) -> list[dict]:
    """Cartesian expansion of a {param: values} mapping, in insertion order."""
    keys = list(grid.keys())
    return [dict(zip(keys, combo)) for combo in itertools.product(*(grid[k] for k in keys))]


@dataclass
class GridSearchResult:
    best_params: dict
    best_score: float
    table: list[dict]  # one row per grid point: params, fold_f1, mean_f1


def grid_search(
    ds: Dataset,
    fit_fn: Callable[..., object],
    grid: Sequence[dict],
    k: int = 5,
    seed: int = 0,
) -> GridSearchResult:
    """Evaluate every grid point with stratified k-fold CV, scored by mean F1.

    Ties keep the earliest grid entry. ``fit_fn(train_ds, **params)`` must
    return a model with ``predict(X)``.
    """
    if not grid:
        raise ValueError("empty grid")
    folds = stratified_kfold(ds, k, seed)
    all_idx = np.arange(ds.n)

    table: list[dict] = []
    best_i = -1
    best_score = -np.inf
    for i, params in enumerate(grid):
        fold_scores = []
        for fold in folds:
            train_idx = np.setdiff1d(all_idx, fold)
            model = fit_fn(ds.subset(train_idx), **params)
            pred = model.predict(ds.X[fold])
            fold_scores.append(binary_f1(ds.y[fold], pred))
        mean_f1 = float(np.mean(fold_scores))
        table.append({"params": dict(params), "fold_f1": fold_scores, "mean_f1": mean_f1})
        if mean_f1 > best_score:
            best_score = mean_f1
            best_i = i
    return GridSearchResult(
        best_params=dict(grid[best_i]), best_score=best_score, table=table
    )

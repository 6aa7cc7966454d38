"""Supervised dataset container with the checks every fit operation relies on."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import DatasetError


@dataclass
class Dataset:
    X: np.ndarray
    y: np.ndarray
    feature_names: list[str] = field(default_factory=list)

    def __post_init__(self):
        self.X = np.asarray(self.X, dtype=np.float64)
        self.y = np.asarray(self.y, dtype=np.int64)
        if self.X.ndim != 2:
            raise DatasetError("X must be 2-dimensional")
        if self.y.shape != (self.X.shape[0],):
            raise DatasetError("y length must match X rows")
        if not self.feature_names:
            self.feature_names = [f"f{i}" for i in range(self.X.shape[1])]
        if len(self.feature_names) != self.X.shape[1]:
            raise DatasetError("feature_names length must match X columns")
        if not np.all(np.isfinite(self.X)):
            raise DatasetError("X contains non-finite entries")
        if not np.all((self.y == 0) | (self.y == 1)):
            raise DatasetError("y must be binary {0,1}")

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def d(self) -> int:
        return self.X.shape[1]

    def require_trainable(self) -> None:
        """Training preconditions: at least 2 samples and both classes present."""
        if self.n < 2:
            raise DatasetError("need at least 2 samples to train")
        if self.y.min() == self.y.max():
            raise DatasetError("both classes must be present to train")

    def subset(self, idx: np.ndarray) -> "Dataset":
        return Dataset(self.X[idx], self.y[idx], self.feature_names)

"""Regularized logistic regression via gradient descent with backtracking."""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from ..errors import NonConvergenceWarning
from .dataset import Dataset


def _sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def logistic_objective_grad(
    X: np.ndarray, y: np.ndarray, w: np.ndarray, b: float, l2: float
) -> tuple[float, np.ndarray, float]:
    """Mean binary cross-entropy plus l2*||w||^2/2, with its gradient.

    The bias is not regularized.
    """
    n = X.shape[0]
    z = X @ w + b
    # log(1 + e^z) - y*z, computed stably
    loss = float(np.mean(np.logaddexp(0.0, z) - y * z))
    obj = loss + 0.5 * l2 * float(w @ w)
    p = _sigmoid(z)
    gw = X.T @ (p - y) / n + l2 * w
    gb = float(np.mean(p - y))
    return obj, gw, gb


@dataclass
class LogisticModel:
    weights: np.ndarray
    bias: float
    l2: float
    feature_mean: np.ndarray | None = None  # set when fitted with standardize
    feature_scale: np.ndarray | None = None
    converged: bool = True
    n_iters: int = 0
    feature_names: list[str] = field(default_factory=list)

    def _transform(self, X: np.ndarray) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        if self.feature_mean is not None:
            X = (X - self.feature_mean) / self.feature_scale
        return X

    def predict_proba(self, X: np.ndarray) -> np.ndarray:
        return _sigmoid(self._transform(X) @ self.weights + self.bias)

    def predict(self, X: np.ndarray, threshold: float = 0.5) -> np.ndarray:
        return (self.predict_proba(X) >= threshold).astype(np.int64)

    def to_dict(self) -> dict:
        return {
            "weights": self.weights.tolist(),
            "bias": self.bias,
            "l2": self.l2,
            "feature_mean": None if self.feature_mean is None else self.feature_mean.tolist(),
            "feature_scale": None if self.feature_scale is None else self.feature_scale.tolist(),
            "converged": self.converged,
            "n_iters": self.n_iters,
            "feature_names": self.feature_names,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "LogisticModel":
        return cls(
            weights=np.array(data["weights"], dtype=np.float64),
            bias=float(data["bias"]),
            l2=float(data["l2"]),
            feature_mean=None
            if data["feature_mean"] is None
            else np.array(data["feature_mean"], dtype=np.float64),
            feature_scale=None
            if data["feature_scale"] is None
            else np.array(data["feature_scale"], dtype=np.float64),
            converged=bool(data["converged"]),
            n_iters=int(data["n_iters"]),
            feature_names=list(data.get("feature_names", [])),
        )


def fit_logreg(
    ds: Dataset,
    l2: float = 0.1,
    max_iters: int = 500,
    tol: float = 1e-6,
    standardize: bool = True,
) -> LogisticModel:
    """Full-batch gradient descent with Armijo backtracking line search.

    Converged when the gradient infinity-norm drops below tol; otherwise the
    best iterate is returned and a NonConvergenceWarning is emitted.
    """
    ds.require_trainable()
    X = ds.X
    mean = scale = None
    if standardize:
        mean = X.mean(axis=0)
        scale = X.std(axis=0)
        scale = np.where(scale == 0.0, 1.0, scale)
        X = (X - mean) / scale
    y = ds.y.astype(np.float64)

    w = np.zeros(ds.d)
    b = 0.0
    best = (np.inf, w, b)
    converged = False
    it = 0
    for it in range(1, max_iters + 1):
        obj, gw, gb = logistic_objective_grad(X, y, w, b, l2)
        if obj < best[0]:
            best = (obj, w, b)
        gnorm_inf = max(float(np.max(np.abs(gw))) if len(gw) else 0.0, abs(gb))
        if gnorm_inf < tol:
            converged = True
            break
        g_sq = float(gw @ gw) + gb * gb
        step = 1.0
        for _ in range(60):
            w_new = w - step * gw
            b_new = b - step * gb
            obj_new, _, _ = logistic_objective_grad(X, y, w_new, b_new, l2)
            if obj_new <= obj - 1e-4 * step * g_sq:
                break
            step *= 0.5
        w, b = w_new, b_new

    if not converged:
        warnings.warn(
            f"logistic regression did not converge in {max_iters} iterations",
            NonConvergenceWarning,
        )
        obj, _, _ = logistic_objective_grad(X, y, w, b, l2)
        if best[0] < obj:
            w, b = best[1], best[2]

    return LogisticModel(
        weights=w,
        bias=float(b),
        l2=l2,
        feature_mean=mean,
        feature_scale=scale,
        converged=converged,
        n_iters=it,
        feature_names=list(ds.feature_names),
    )

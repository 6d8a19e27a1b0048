"""Gaussian scalar kernel, its Gram matrices and its time derivative."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import cdist

from .exceptions import ValidationError

__all__ = ["GaussianKernel", "gram", "time_derivative"]


def _as_points(X) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.ndim == 0:
        return X.reshape(1, 1)
    if X.ndim == 1:
        # a flat list of scalars is a list of 1-d points
        return X[:, None]
    if X.ndim != 2:
        raise ValidationError(f"expected a list of points, got array of shape {X.shape}")
    return X


@dataclass(frozen=True)
class GaussianKernel:
    """``k(x, z) = exp(-gamma * ||x - z||^2)``.

    Parameters
    ----------
    gamma : float
        Inverse squared length-scale, strictly positive.
    """

    gamma: float = 1.0

    def __post_init__(self):
        gamma = float(self.gamma)
        if not np.isfinite(gamma) or gamma <= 0:
            raise ValidationError(f"gamma must be a positive finite number, got {self.gamma}")
        object.__setattr__(self, "gamma", gamma)

    def __call__(self, x, z) -> float:
        x = np.atleast_1d(np.asarray(x, dtype=float))
        z = np.atleast_1d(np.asarray(z, dtype=float))
        if x.shape != z.shape:
            raise ValidationError(f"dimension mismatch: {x.shape} vs {z.shape}")
        d = x - z
        return float(np.exp(-self.gamma * np.dot(d, d)))

    def gram(self, X, Z=None) -> np.ndarray:
        """Matrix of ``k(X[i], Z[j])``. ``Z`` defaults to ``X``."""
        X = _as_points(X)
        Z = X if Z is None else _as_points(Z)
        if X.shape[1] != Z.shape[1]:
            raise ValidationError(f"dimension mismatch: {X.shape[1]} vs {Z.shape[1]}")
        return np.exp(-self.gamma * cdist(X, Z, "sqeuclidean"))

    def time_derivative(self, t, t_i):
        """``d k(t, t_i) / dt`` for scalar times, broadcasting over arrays."""
        d = np.asarray(t, dtype=float) - np.asarray(t_i, dtype=float)
        out = -2.0 * self.gamma * d * np.exp(-self.gamma * d * d)
        return float(out) if out.ndim == 0 else out

    def time_derivative_gram(self, t, t_ref) -> np.ndarray:
        """Matrix of ``d k(t[i], t_ref[j]) / dt[i]``."""
        t = np.atleast_1d(np.asarray(t, dtype=float))
        t_ref = np.atleast_1d(np.asarray(t_ref, dtype=float))
        d = t[:, None] - t_ref[None, :]
        return -2.0 * self.gamma * d * np.exp(-self.gamma * d * d)


def gram(kernel: GaussianKernel, X, Z=None) -> np.ndarray:
    return kernel.gram(X, Z)


def time_derivative(kernel: GaussianKernel, t, t_i):
    return kernel.time_derivative(t, t_i)

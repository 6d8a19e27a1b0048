"""Input checks shared by the estimators."""

import numpy as np
from sklearn.utils import check_array

from .exceptions import ValidationError


def check_times(times) -> np.ndarray:
    t = np.atleast_1d(np.asarray(times, dtype=float))
    if t.ndim != 1:
        raise ValidationError("times must be one-dimensional")
    if t.shape[0] < 2:
        raise ValidationError(f"need at least 2 time points, got {t.shape[0]}")
    if not np.all(np.isfinite(t)):
        raise ValidationError("times must be finite")
    if np.any(np.diff(t) <= 0):
        raise ValidationError("times must be strictly increasing")
    return t


def check_trajectory(t, Y):
    """Validate a ``(times, values)`` pair; 1-d values become one column."""
    t = check_times(t)
    Y = np.asarray(Y, dtype=float)
    if Y.ndim == 1:
        Y = Y[:, None]
    Y = check_array(Y, ensure_2d=True, ensure_min_samples=2)
    if Y.shape[0] != t.shape[0]:
        raise ValidationError(f"{Y.shape[0]} observations for {t.shape[0]} times")
    return t, Y


def check_states(X, p=None) -> np.ndarray:
    """A single state vector or a stack of them, as a 2-d float array."""
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[None, :]
    X = check_array(X, ensure_2d=True)
    if p is not None and X.shape[1] != p:
        raise ValidationError(f"expected states of dimension {p}, got {X.shape[1]}")
    return X


def check_positive(value, name, allow_zero=False) -> float:
    value = float(value)
    ok = value >= 0 if allow_zero else value > 0
    if not (np.isfinite(value) and ok):
        bound = "non-negative" if allow_zero else "positive"
        raise ValidationError(f"{name} must be {bound}, got {value}")
    return value

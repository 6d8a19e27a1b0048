"""Sparse gradient matching: proximal operators and accelerated proximal gradient.

The penalised objective is

    F(a) = 0.5 ||gdot - K a||^2 + 0.5 ridge a'K a
           + lambda1 * ((1 - alpha) ||a||_1 + alpha * sum_l ||a_l||_2)

where ``a_l`` is the ``p``-block of coefficients attached to anchor ``l``.
``alpha = 1`` is the pure group lasso, ``alpha = 0`` the pure lasso.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from sklearn.utils.validation import check_is_fitted

from ._validation import check_positive, check_states
from .exceptions import ConfigurationError, DivergenceError, ValidationError
from .operator_kernels import OperatorKernel, block_gram
from .vector_field import (
    OdeModel,
    VectorFieldRidge,
    _solve_ridge,
    eval_h,
    matching_data,
    smooth_gradient,
    smooth_objective,
)

__all__ = [
    "SparseConfig",
    "SparseDiagnostics",
    "SparsityReport",
    "SparseVectorField",
    "prox_l1",
    "prox_group",
    "prox_sparse_group",
    "contiguous_groups",
    "sparse_penalty",
    "lipschitz_constant",
    "fit_sparse",
    "fit_sparse_data",
    "sparsity_report",
]


@dataclass(frozen=True)
class SparseConfig:
    lambda1: float = 0.0
    alpha: float = 0.5
    max_iters: int = 5000
    tol: float = 1e-9

    def __post_init__(self):
        if not 0.0 <= self.alpha <= 1.0:
            raise ConfigurationError(f"alpha must lie in [0, 1], got {self.alpha}")
        if not self.lambda1 >= 0:
            raise ConfigurationError(f"lambda1 must be non-negative, got {self.lambda1}")
        if self.max_iters < 1:
            raise ConfigurationError("max_iters must be >= 1")
        if not self.tol > 0:
            raise ConfigurationError("tol must be positive")


def prox_l1(u, mu: float) -> np.ndarray:
    """Soft thresholding, the proximal map of ``mu * ||.||_1``."""
    u = np.asarray(u, dtype=float)
    return np.sign(u) * np.maximum(np.abs(u) - mu, 0.0)


def contiguous_groups(m: int, p: int):
    """Index blocks ``[l p, (l + 1) p)`` for ``l = 0..m-1``."""
    return [np.arange(l * p, (l + 1) * p) for l in range(m)]


def _group_matrix(u, groups):
    # fast path for equal-sized contiguous groups
    sizes = {len(g) for g in groups}
    if len(sizes) == 1:
        size = sizes.pop()
        if size > 0 and all(g[0] == i * size and np.array_equal(g, np.arange(i * size, (i + 1) * size))
                            for i, g in enumerate(groups)) and len(groups) * size == u.shape[0]:
            return u.reshape(len(groups), size)
    return None


def prox_group(u, mu: float, groups) -> np.ndarray:
    """Block soft thresholding, the proximal map of ``mu * sum_I ||u_I||_2``."""
    u = np.asarray(u, dtype=float)
    groups = [np.asarray(g, dtype=int) for g in groups]
    if any(g.size == 0 for g in groups):
        raise ConfigurationError("groups must be non-empty")
    U = _group_matrix(u, groups)
    if U is not None:
        norms = np.linalg.norm(U, axis=1, keepdims=True)
        with np.errstate(divide="ignore", invalid="ignore"):
            scale = np.where(norms > mu, 1.0 - mu / norms, 0.0)
        return (scale * U).ravel()
    out = u.copy()
    for g in groups:
        norm = np.linalg.norm(u[g])
        out[g] = 0.0 if norm <= mu else (1.0 - mu / norm) * u[g]
    return out


def prox_sparse_group(u, lam: float, alpha: float, groups) -> np.ndarray:
    """Sparse-group-lasso prox: group shrinkage by ``lam * alpha`` after soft thresholding by ``lam * (1 - alpha)``."""
    return prox_group(prox_l1(u, lam * (1.0 - alpha)), lam * alpha, groups)


def sparse_penalty(a, lambda1: float, alpha: float, p: int) -> float:
    A = np.asarray(a, dtype=float).reshape(-1, p)
    return float(lambda1 * ((1.0 - alpha) * np.abs(A).sum() + alpha * np.linalg.norm(A, axis=1).sum()))


def lipschitz_constant(G, ridge: float) -> float:
    """Spectral Lipschitz constant ``s (s + ridge)`` of ``a -> G((G + ridge I) a - gdot)``."""
    s = max(float(np.linalg.eigvalsh(G)[-1]), 0.0)
    return s * (s + ridge)


@dataclass
class SparseDiagnostics:
    objective: list = field(default_factory=list)
    step: list = field(default_factory=list)
    zero_groups: list = field(default_factory=list)
    n_iter: int = 0
    converged: bool = False
    lipschitz: float = float("nan")

    def to_csv(self, path) -> None:
        with open(path, "w", newline="\n", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["iter", "objective", "step", "zero_groups"])
            for i, (f, s, z) in enumerate(zip(self.objective, self.step, self.zero_groups)):
                w.writerow([i, repr(f), repr(s), z])


def fit_sparse_data(anchors, targets, kernel: OperatorKernel, ridge: float, cfg: SparseConfig,
                    init=None, G=None):
    """Accelerated proximal gradient on the sparse-group-lasso gradient-matching objective.

    Starts from the closed-form ridge solution unless ``init`` (a warm start)
    is given. Returns the fitted model and a :class:`SparseDiagnostics`.
    """
    ridge = check_positive(ridge, "ridge")
    X = check_states(anchors)
    Y = check_states(targets, X.shape[1])
    m, p = X.shape
    groups = contiguous_groups(m, p)
    gdot = Y.ravel()
    if G is None:
        G = block_gram(kernel, X)
    L = lipschitz_constant(G, ridge)
    a = _solve_ridge(G, gdot, ridge) if init is None else np.asarray(init, dtype=float).ravel().copy()

    def objective(v):
        return smooth_objective(v, G, gdot, ridge) + sparse_penalty(v, cfg.lambda1, cfg.alpha, p)

    diag = SparseDiagnostics(lipschitz=L)
    f_prev = objective(a)
    diag.objective.append(f_prev)
    diag.step.append(0.0 if L == 0 else 1.0 / L)
    diag.zero_groups.append(int(np.sum(np.all(a.reshape(m, p) == 0, axis=1))))
    if L == 0:
        diag.converged = True
        return OdeModel(kernel, X, a.reshape(m, p), ridge), diag

    best_a, best_f = a.copy(), f_prev
    y, t = a.copy(), 1.0
    step = 1.0 / L
    for it in range(1, cfg.max_iters + 1):
        a_new = prox_sparse_group(y - step * smooth_gradient(y, G, gdot, ridge), cfg.lambda1 * step,
                                  cfg.alpha, groups)
        t_new = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t * t))
        y = a_new + ((t - 1.0) / t_new) * (a_new - a)
        a, t = a_new, t_new
        f = objective(a)
        if not np.isfinite(f):
            raise DivergenceError(f"objective became non-finite at iteration {it}")
        diag.objective.append(f)
        diag.step.append(step)
        diag.zero_groups.append(int(np.sum(np.all(a.reshape(m, p) == 0, axis=1))))
        diag.n_iter = it
        if f < best_f:
            best_a, best_f = a.copy(), f
        if abs(f_prev - f) <= cfg.tol * max(abs(f_prev), 1e-300):
            diag.converged = True
            break
        f_prev = f
    # the momentum sequence is not monotone; never hand back a worse iterate
    if objective(a) > best_f:
        a = best_a
    return OdeModel(kernel, X, a.reshape(m, p), ridge), diag


def fit_sparse(smoother, taus, kernel: OperatorKernel, ridge: float, cfg: SparseConfig, init=None):
    X, Y = matching_data(smoother, taus)
    return fit_sparse_data(X, Y, kernel, ridge, cfg, init=init)


@dataclass(frozen=True)
class SparsityReport:
    zero_coeffs: int
    zero_groups: int
    n_coeffs: int
    n_groups: int

    @property
    def coeff_fraction(self) -> float:
        return self.zero_coeffs / self.n_coeffs

    @property
    def group_fraction(self) -> float:
        return self.zero_groups / self.n_groups

    @property
    def fractions(self):
        return self.coeff_fraction, self.group_fraction


def sparsity_report(model: OdeModel, tol: float = 1e-8) -> SparsityReport:
    """Count coefficients, and whole anchor blocks, whose magnitude is below ``tol``."""
    tol = check_positive(tol, "tol")
    small = np.abs(model.coeffs) < tol
    return SparsityReport(int(small.sum()), int(np.all(small, axis=1).sum()), small.size, model.m)


class SparseVectorField(VectorFieldRidge):
    """:class:`VectorFieldRidge` with an added sparse-group-lasso penalty.

    Parameters
    ----------
    lambda1 : float
        Overall weight of the sparsity penalty.
    alpha : float in [0, 1]
        Share of the group term; the lasso term gets ``1 - alpha``.
    max_iter, tol : stopping rule of the proximal iterations.
    warm_start : bool
        Reuse the previous solution as the starting point when refitting.
    """

    def __init__(self, kernel="decomposable", gamma=1.0, C=None, ridge=1e-3, lambda1=0.0,
                 alpha=0.5, max_iter=5000, tol=1e-9, warm_start=False):
        super().__init__(kernel=kernel, gamma=gamma, C=C, ridge=ridge)
        self.lambda1 = lambda1
        self.alpha = alpha
        self.max_iter = max_iter
        self.tol = tol
        self.warm_start = warm_start

    def fit(self, X, Y):
        X = check_states(X)
        cfg = SparseConfig(self.lambda1, self.alpha, self.max_iter, self.tol)
        init = None
        if self.warm_start and hasattr(self, "model_") and self.model_.coeffs.shape == X.shape:
            init = self.model_.coeffs
        self.model_, self.diagnostics_ = fit_sparse_data(
            X, Y, self._make_kernel(X.shape[1]), self.ridge, cfg, init=init
        )
        self.n_features_in_ = X.shape[1]
        self.n_iter_ = self.diagnostics_.n_iter
        return self

    def sparsity(self, tol: float = 1e-8) -> SparsityReport:
        check_is_fitted(self, "model_")
        return sparsity_report(self.model_, tol)

"""Learning the structure matrix of a decomposable kernel.

With ``K(x, z) = k(x, z) C`` the predictions on the anchors are the
``p x m`` matrix ``H = C A Ks`` where ``A`` holds the coefficient vectors as
columns and ``Ks`` is the scalar Gram matrix. For fixed ``A`` the loss

    L(C) = 0.5 ||Gdot - C A Ks||_F^2 + 0.5 ridge tr(C A Ks A')

is minimised over the PSD cone by projected gradient descent; refitting
``A`` for fixed ``C`` is the closed-form ridge step. The two steps are
alternated.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from sklearn.utils.validation import check_is_fitted

from ._validation import check_positive, check_states
from .exceptions import ConfigurationError, NumericalError
from .operator_kernels import OperatorKernel, StructureMatrix
from .vector_field import OdeModel, VectorFieldRidge, fit_ridge_data, matching_data

__all__ = [
    "KernelLearnConfig",
    "project_psd",
    "structure_loss",
    "grad_C",
    "lipschitz_C",
    "fit_C",
    "alternate_fit",
    "alternate_fit_data",
    "StructureLearningVectorField",
]


@dataclass(frozen=True)
class KernelLearnConfig:
    outer_iters: int = 10
    inner_iters: int = 50
    tol: float = 1e-8
    init_C: np.ndarray | None = None

    def __post_init__(self):
        if self.outer_iters < 1 or self.inner_iters < 1:
            raise ConfigurationError("iteration counts must be >= 1")
        if not self.tol > 0:
            raise ConfigurationError("tol must be positive")


def project_psd(M) -> np.ndarray:
    """Frobenius-nearest PSD matrix: clamp the negative eigenvalues of ``(M + M') / 2``."""
    M = np.asarray(M, dtype=float)
    S = 0.5 * (M + M.T)
    try:
        w, U = np.linalg.eigh(S)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"eigendecomposition failed: {exc}") from exc
    P = (U * np.clip(w, 0.0, None)) @ U.T
    return 0.5 * (P + P.T)


def structure_loss(C, Ks, A, Gdot, ridge) -> float:
    """``L(C)`` for coefficient matrix ``A`` (p x m) and targets ``Gdot`` (p x m)."""
    AK = A @ Ks
    E = Gdot - C @ AK
    return float(0.5 * np.sum(E * E) + 0.5 * ridge * np.sum(C * (AK @ A.T)))


def grad_C(C, Ks, A, Gdot, ridge) -> np.ndarray:
    """Symmetrised gradient ``sym(-E Ks A' + 0.5 ridge A Ks A')`` with ``E = Gdot - C A Ks``."""
    AK = A @ Ks
    E = Gdot - C @ AK
    G = -E @ AK.T + 0.5 * ridge * (AK @ A.T)
    return 0.5 * (G + G.T)


def lipschitz_C(Ks, A) -> float:
    """``||H_I Ks A'||_F^2`` with ``H_I = A Ks`` the predictions at ``C = I``."""
    H_I = A @ Ks
    return float(np.linalg.norm(H_I @ Ks @ A.T, "fro") ** 2)


def fit_C(Ks, A, Gdot, ridge, C0=None, inner_iters: int = 50, tol: float = 1e-8,
          max_halvings: int = 60):
    """Projected gradient descent on ``L(C)`` with ``A`` held fixed.

    The step starts at ``1 / lipschitz_C`` and is halved whenever a step
    would increase the loss, so every accepted iterate is no worse than the
    previous one.

    Returns
    -------
    C : ndarray (p, p)
    history : list of float
        Loss after each accepted step, starting with the loss at ``C0``.
    """
    A = np.asarray(A, dtype=float)
    p = A.shape[0]
    L = lipschitz_C(Ks, A)
    if L == 0 or not np.isfinite(L):
        # no model to learn from: hand back the starting point untouched
        C = np.eye(p) if C0 is None else np.array(C0, dtype=float)
        return C, [structure_loss(C, Ks, A, Gdot, ridge)]
    C = np.eye(p) if C0 is None else project_psd(C0)
    loss = structure_loss(C, Ks, A, Gdot, ridge)
    history = [loss]
    step = 1.0 / L
    for _ in range(inner_iters):
        g = grad_C(C, Ks, A, Gdot, ridge)
        if not np.any(g):
            break
        for _ in range(max_halvings):
            C_new = project_psd(C - step * g)
            new_loss = structure_loss(C_new, Ks, A, Gdot, ridge)
            if new_loss <= loss:
                break
            step *= 0.5
        else:
            break
        change = loss - new_loss
        C, loss = C_new, new_loss
        history.append(loss)
        if change <= tol * max(abs(loss), 1e-300):
            break
    return C, history


@dataclass
class AlternationHistory:
    objective: list = field(default_factory=list)
    structures: list = field(default_factory=list)


def alternate_fit_data(anchors, targets, gamma: float, ridge: float, cfg: KernelLearnConfig = None):
    """Alternate closed-form coefficient fits with projected-gradient structure fits.

    Returns the final model (its kernel carries the learned ``C``), the
    learned :class:`StructureMatrix`, and the objective after every half-step.
    """
    cfg = cfg or KernelLearnConfig()
    ridge = check_positive(ridge, "ridge")
    X = check_states(anchors)
    Y = check_states(targets, X.shape[1])
    p = X.shape[1]
    C = np.eye(p) if cfg.init_C is None else project_psd(cfg.init_C)
    kernel = OperatorKernel("decomposable", gamma, StructureMatrix.identity(p))
    Ks = kernel.scalar.gram(X)
    Gdot = Y.T
    hist = AlternationHistory()
    prev = None
    model = None
    for _ in range(cfg.outer_iters):
        model = fit_ridge_data(X, Y, kernel.with_structure(C), ridge)
        A = model.coeffs.T
        hist.objective.append(structure_loss(C, Ks, A, Gdot, ridge))
        C, inner = fit_C(Ks, A, Gdot, ridge, C, cfg.inner_iters, cfg.tol)
        hist.objective.append(inner[-1])
        hist.structures.append(C.copy())
        cur = inner[-1]
        if prev is not None and abs(prev - cur) <= cfg.tol * max(abs(prev), 1e-300):
            break
        prev = cur
    # the returned coefficients belong to the last a-step; pair them with the
    # C they were fitted under so the model is consistent
    C_model = model.kernel.C
    return model, StructureMatrix(C_model), StructureMatrix(C), hist


def alternate_fit(smoother, taus, gamma: float, ridge: float, cfg: KernelLearnConfig = None):
    X, Y = matching_data(smoother, taus)
    return alternate_fit_data(X, Y, gamma, ridge, cfg)


class StructureLearningVectorField(VectorFieldRidge):
    """Decomposable-kernel field whose structure matrix ``C`` is learned.

    After the alternation the coefficients are refitted once under the final
    ``C``, so ``predict`` and ``structure_`` agree.

    Attributes
    ----------
    structure_ : ndarray (p, p)
    history_ : AlternationHistory
    """

    def __init__(self, gamma=1.0, ridge=1e-3, outer_iters=10, inner_iters=50, tol=1e-8, init_C=None):
        super().__init__(kernel="decomposable", gamma=gamma, C=None, ridge=ridge)
        self.outer_iters = outer_iters
        self.inner_iters = inner_iters
        self.tol = tol
        self.init_C = init_C

    def fit(self, X, Y):
        X = check_states(X)
        cfg = KernelLearnConfig(self.outer_iters, self.inner_iters, self.tol, self.init_C)
        _, _, learned, self.history_ = alternate_fit_data(X, Y, self.gamma, self.ridge, cfg)
        kernel = OperatorKernel("decomposable", self.gamma, learned)
        self.model_ = fit_ridge_data(X, Y, kernel, self.ridge)
        self.structure_ = learned.C
        self.n_features_in_ = X.shape[1]
        return self

    @property
    def structure(self):
        check_is_fitted(self, "structure_")
        return self.structure_

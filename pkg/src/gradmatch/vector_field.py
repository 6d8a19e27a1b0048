"""Vector-field regression with operator-valued kernels (gradient matching).

Given a smoother ``g`` and anchor times ``tau_1..tau_m``, the vector field
is the kernel expansion

    h(x) = sum_l K(x, g(tau_l)) a_l

whose stacked coefficients solve ``(K + ridge I) a = gdot``, where ``K``
is the block Gram matrix on the anchors and ``gdot`` stacks the smoother
derivatives ``dg/dt(tau_l)``.

Every quadratic objective in this package uses the convention

    0.5 * sum_l ||gdot_l - h(g(tau_l))||^2 + 0.5 * ridge * ||h||^2

so that the closed form above is its exact minimiser.
"""

from __future__ import annotations

import io
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.linalg as sla
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils import check_random_state
from sklearn.utils.validation import check_is_fitted

from ._validation import check_positive, check_states
from .exceptions import NumericalError, ParseError, ValidationError
from .operator_kernels import OperatorKernel, StructureMatrix, block_gram, cross_block_gram

__all__ = [
    "OdeModel",
    "MultiModel",
    "VectorFieldRidge",
    "MultiVectorFieldRidge",
    "sample_times",
    "matching_data",
    "fit_ridge",
    "fit_ridge_data",
    "eval_h",
    "smooth_objective",
    "smooth_gradient",
    "fit_multi",
    "multi_objective",
    "consensus",
    "rkhs_distance",
    "save_model",
    "load_model",
]


def sample_times(m: int, horizon: float, mode: str = "regular", seed=None, start: float = 0.0):
    """``m`` anchor times in ``(start, start + horizon]``.

    ``regular`` gives ``start + l * horizon / m`` for ``l = 1..m``;
    ``uniform`` gives sorted i.i.d. uniform draws from a seeded generator.
    """
    m = int(m)
    if m < 1:
        raise ValidationError(f"need at least one anchor time, got m={m}")
    horizon = check_positive(horizon, "horizon")
    if mode == "regular":
        return start + horizon * np.arange(1, m + 1) / m
    if mode in ("uniform", "random", "uniform-random"):
        rng = check_random_state(seed)
        # 1 - U lies in (0, 1]
        return start + horizon * np.sort(1.0 - rng.random_sample(m))
    raise ValidationError(f"unknown sampling mode {mode!r}")


@dataclass(frozen=True)
class OdeModel:
    """A fitted vector field ``h(x) = sum_l K(x, anchors[l]) coeffs[l]``."""

    kernel: OperatorKernel
    anchors: np.ndarray
    coeffs: np.ndarray
    ridge: float

    def __post_init__(self):
        anchors = np.array(self.anchors, dtype=float, ndmin=2)
        coeffs = np.array(self.coeffs, dtype=float, ndmin=2)
        if anchors.shape != coeffs.shape or anchors.shape[0] < 1:
            raise ValidationError(
                f"anchors {anchors.shape} and coeffs {coeffs.shape} must both be (m, p), m >= 1"
            )
        self.kernel._check_dim(anchors.shape[1])
        object.__setattr__(self, "anchors", anchors)
        object.__setattr__(self, "coeffs", coeffs)
        object.__setattr__(self, "ridge", float(self.ridge))

    @property
    def m(self) -> int:
        return self.anchors.shape[0]

    @property
    def p(self) -> int:
        return self.anchors.shape[1]

    def __call__(self, x) -> np.ndarray:
        return eval_h(self, x)

    def rkhs_norm2(self) -> float:
        a = self.coeffs.ravel()
        return float(a @ block_gram(self.kernel, self.anchors) @ a)


def eval_h(model: OdeModel, x) -> np.ndarray:
    """Evaluate the vector field at one state (returns a p-vector) or a stack of states."""
    single = np.ndim(x) == 1
    X = check_states(x, model.p)
    kernel = model.kernel
    if kernel.family == "decomposable":
        # sum_l k(x, x_l) C a_l = (k(x, .) @ A) C^T, C symmetric
        out = kernel.scalar.gram(X, model.anchors) @ model.coeffs @ kernel.C
    else:
        out = (cross_block_gram(kernel, X, model.anchors) @ model.coeffs.ravel()).reshape(-1, model.p)
    return out[0] if single else out


def matching_data(smoother, taus):
    """Anchors ``g(tau)`` and targets ``dg/dt(tau)``, both ``(m, p)``."""
    taus = np.atleast_1d(np.asarray(taus, dtype=float))
    return smoother.predict(taus), smoother.predict_derivative(taus)


def _solve_ridge(G, rhs, ridge):
    A = G + ridge * np.eye(G.shape[0])
    try:
        return sla.solve(A, rhs, assume_a="pos")
    except sla.LinAlgError:
        pass
    try:
        return sla.solve(A, rhs, assume_a="sym")
    except sla.LinAlgError as exc:
        raise NumericalError(f"gradient matching system is singular: {exc}") from exc


def fit_ridge_data(anchors, targets, kernel: OperatorKernel, ridge: float) -> OdeModel:
    """Closed-form operator-valued kernel ridge regression of ``targets`` on ``anchors``."""
    ridge = check_positive(ridge, "ridge")
    X = check_states(anchors)
    Y = check_states(targets, X.shape[1])
    if Y.shape[0] != X.shape[0]:
        raise ValidationError(f"{X.shape[0]} anchors but {Y.shape[0]} targets")
    a = _solve_ridge(block_gram(kernel, X), Y.ravel(), ridge)
    return OdeModel(kernel, X, a.reshape(X.shape), ridge)


def fit_ridge(smoother, taus, kernel: OperatorKernel, ridge: float) -> OdeModel:
    """Gradient matching with a ridge penalty, solved in closed form."""
    X, Y = matching_data(smoother, taus)
    return fit_ridge_data(X, Y, kernel, ridge)


def smooth_objective(a, G, targets, ridge) -> float:
    """``0.5 ||targets - G a||^2 + 0.5 ridge a^T G a`` with ``G`` the block Gram."""
    Ga = G @ a
    r = targets - Ga
    return float(0.5 * r @ r + 0.5 * ridge * a @ Ga)


def smooth_gradient(a, G, targets, ridge) -> np.ndarray:
    """Gradient of :func:`smooth_objective`: ``G ((G + ridge I) a - targets)``."""
    return G @ (G @ a + ridge * a - targets)


class VectorFieldRidge(RegressorMixin, BaseEstimator):
    """Operator-valued kernel ridge regression ``x -> dx/dt``.

    ``fit(X, Y)`` takes anchor states ``X`` and target derivatives ``Y``,
    both of shape ``(m, p)``. ``predict(X)`` evaluates the learned field.

    Parameters
    ----------
    kernel : {"decomposable", "transformable", "hadamard"}
    gamma : float
        Bandwidth of the Gaussian scalar kernel.
    C : array-like of shape (p, p), optional
        Structure matrix for the decomposable/Hadamard kernels. Identity
        when omitted.
    ridge : float
    """

    def __init__(self, kernel="decomposable", gamma=1.0, C=None, ridge=1e-3):
        self.kernel = kernel
        self.gamma = gamma
        self.C = C
        self.ridge = ridge

    def _make_kernel(self, p) -> OperatorKernel:
        if self.kernel == "transformable":
            return OperatorKernel("transformable", self.gamma)
        C = np.eye(p) if self.C is None else self.C
        return OperatorKernel(self.kernel, self.gamma, StructureMatrix(C))

    def fit(self, X, Y):
        X = check_states(X)
        self.model_ = fit_ridge_data(X, Y, self._make_kernel(X.shape[1]), self.ridge)
        self.n_features_in_ = X.shape[1]
        return self

    @property
    def coef_(self):
        check_is_fitted(self, "model_")
        return self.model_.coeffs

    def predict(self, X):
        check_is_fitted(self, "model_")
        return eval_h(self.model_, check_states(X, self.n_features_in_))


@dataclass(frozen=True)
class MultiModel:
    """``r`` vector fields fitted jointly on ``r`` trajectories."""

    models: tuple
    sim_weight: float

    def __post_init__(self):
        models = tuple(self.models)
        if not models:
            raise ValidationError("a multi-model needs at least one member")
        p, kernel = models[0].p, models[0].kernel
        for mdl in models[1:]:
            if mdl.p != p or mdl.kernel != kernel:
                raise ValidationError("members of a multi-model must share kernel and dimension")
        object.__setattr__(self, "models", models)

    @property
    def r(self) -> int:
        return len(self.models)

    def __call__(self, x):
        return consensus(self)(x)


def _multi_blocks(anchor_sets, kernel):
    r = len(anchor_sets)
    blocks = [[cross_block_gram(kernel, anchor_sets[i], anchor_sets[j]) for j in range(r)] for i in range(r)]
    full = np.block(blocks)
    full = 0.5 * (full + full.T)
    diag = sla.block_diag(*(blocks[i][i] for i in range(r)))
    return full, 0.5 * (diag + diag.T)


def multi_objective(a, full, diag, targets, ridge, sim_weight, r) -> float:
    """``0.5||gdot - D a||^2 + 0.5 ridge a'Da + 0.5 sim a'(rD - K)a``."""
    Da = diag @ a
    res = targets - Da
    return float(
        0.5 * res @ res + 0.5 * ridge * a @ Da + 0.5 * sim_weight * (r * a @ Da - a @ (full @ a))
    )


def _multi_system(full, diag, targets, ridge, sim_weight, r):
    M = diag @ diag + ridge * diag + sim_weight * (r * diag - full)
    return 0.5 * (M + M.T), diag @ targets


def _solve_multi_direct(full, diag, targets, ridge, sim_weight, r):
    # min ||[D; Q^1/2] a - [gdot; 0]||^2 with Q = ridge D + sim (r D - K);
    # avoids forming D^2, whose conditioning is the square of D's
    Q = ridge * diag + sim_weight * (r * diag - full)
    w, U = np.linalg.eigh(0.5 * (Q + Q.T))
    Q_half = (U * np.sqrt(np.clip(w, 0.0, None))) @ U.T
    A = np.vstack([diag, Q_half])
    rhs = np.concatenate([targets, np.zeros_like(targets)])
    a, *_ = sla.lstsq(A, rhs, lapack_driver="gelsd")
    return a


def _solve_multi_sgd(full, diag, targets, ridge, sim_weight, r, batch_size, epochs, seed):
    M, b = _multi_system(full, diag, targets, ridge, sim_weight, r)
    L = np.linalg.norm(M, "fro")
    if L == 0:
        return np.zeros_like(b)
    rng = check_random_state(seed)
    N = b.shape[0]
    a = np.zeros(N)
    avg = np.zeros(N)
    n_avg = 0
    for epoch in range(epochs):
        order = rng.permutation(N)
        for start in range(0, N, batch_size):
            idx = order[start : start + batch_size]
            a[idx] -= (M[idx] @ a - b[idx]) / L
            if epoch >= 1:
                n_avg += 1
                avg += (a - avg) / n_avg
    return avg if n_avg else a


def fit_multi(
    smoothers,
    taus,
    kernel: OperatorKernel,
    ridge: float,
    sim_weight: float = 0.1,
    solver: str = "direct",
    batch_size: int = 10,
    epochs: int = 20,
    seed=None,
) -> MultiModel:
    """Jointly fit one vector field per trajectory with a similarity penalty.

    The penalty ``sim_weight / 4 * sum_ij ||h_i - h_j||^2`` pulls the ``r``
    fields towards each other. ``solver="direct"`` minimises the quadratic
    objective exactly; ``solver="sgd"`` runs averaged stochastic block
    gradient descent (batches of ``batch_size`` coefficients, averaging after
    the first epoch, step ``1 / ||M||_F``).
    """
    smoothers = list(smoothers)
    r = len(smoothers)
    if r < 1:
        raise ValidationError("fit_multi needs at least one smoother")
    sim_weight = check_positive(sim_weight, "sim_weight", allow_zero=True)
    ridge = float(ridge)
    if not ridge > 0:
        raise ValidationError(
            f"ridge must be positive for the multi-trajectory system to be well posed, got {ridge}"
        )
    data = [matching_data(s, taus) for s in smoothers]
    anchor_sets = [X for X, _ in data]

    if r == 1 or sim_weight == 0.0:
        # the objective decouples into r independent ridge problems
        models = tuple(fit_ridge_data(X, Y, kernel, ridge) for X, Y in data)
        return MultiModel(models, sim_weight)

    full, diag = _multi_blocks(anchor_sets, kernel)
    targets = np.concatenate([Y.ravel() for _, Y in data])
    if solver == "direct":
        a = _solve_multi_direct(full, diag, targets, ridge, sim_weight, r)
    elif solver == "sgd":
        a = _solve_multi_sgd(full, diag, targets, ridge, sim_weight, r, batch_size, epochs, seed)
    else:
        raise ValidationError(f"unknown solver {solver!r}; use 'direct' or 'sgd'")
    if not np.all(np.isfinite(a)):
        raise NumericalError("multi-trajectory solve produced non-finite coefficients")
    parts = np.split(a, r)
    models = tuple(OdeModel(kernel, X, c.reshape(X.shape), ridge) for X, c in zip(anchor_sets, parts))
    return MultiModel(models, sim_weight)


def consensus(mm: MultiModel) -> OdeModel:
    """The average field ``(1/r) sum_i h_i`` as a single kernel expansion."""
    anchors = np.vstack([mdl.anchors for mdl in mm.models])
    coeffs = np.vstack([mdl.coeffs for mdl in mm.models]) / mm.r
    return OdeModel(mm.models[0].kernel, anchors, coeffs, mm.models[0].ridge)


def rkhs_distance(h1: OdeModel, h2: OdeModel) -> float:
    """``||h1 - h2||`` in the RKHS of the shared kernel."""
    a1, a2 = h1.coeffs.ravel(), h2.coeffs.ravel()
    d2 = (
        a1 @ block_gram(h1.kernel, h1.anchors) @ a1
        + a2 @ block_gram(h2.kernel, h2.anchors) @ a2
        - 2.0 * a1 @ cross_block_gram(h1.kernel, h1.anchors, h2.anchors) @ a2
    )
    return float(np.sqrt(max(d2, 0.0)))


class MultiVectorFieldRidge(BaseEstimator):
    """Estimator front end to :func:`fit_multi`.

    ``fit(Xs, Ys)`` takes one ``(m, p)`` anchor array and one target array
    per trajectory. ``predict`` uses the consensus field.
    """

    def __init__(self, kernel="decomposable", gamma=1.0, C=None, ridge=1e-3,
                 sim_weight=0.1, solver="direct", batch_size=10, epochs=20, random_state=None):
        self.kernel = kernel
        self.gamma = gamma
        self.C = C
        self.ridge = ridge
        self.sim_weight = sim_weight
        self.solver = solver
        self.batch_size = batch_size
        self.epochs = epochs
        self.random_state = random_state

    def fit(self, Xs, Ys):
        Xs = [check_states(X) for X in Xs]
        if len(Xs) != len(Ys):
            raise ValidationError("need one target array per anchor array")
        p = Xs[0].shape[1]
        okernel = VectorFieldRidge(self.kernel, self.gamma, self.C)._make_kernel(p)
        smoothers = [_FixedMatch(X, Y) for X, Y in zip(Xs, Ys)]
        self.multi_model_ = fit_multi(
            smoothers, np.arange(Xs[0].shape[0]), okernel, self.ridge, self.sim_weight,
            self.solver, self.batch_size, self.epochs, self.random_state,
        )
        self.model_ = consensus(self.multi_model_)
        self.n_features_in_ = p
        return self

    def predict(self, X):
        check_is_fitted(self, "model_")
        return eval_h(self.model_, check_states(X, self.n_features_in_))


class _FixedMatch:
    """Adapter exposing precomputed anchors/targets through the smoother interface."""

    def __init__(self, X, Y):
        self._X = np.asarray(X, dtype=float)
        self._Y = check_states(Y, self._X.shape[1])
        if self._Y.shape[0] != self._X.shape[0]:
            raise ValidationError("anchor and target arrays differ in length")

    def predict(self, idx):
        return self._X[np.asarray(idx, dtype=int)]

    def predict_derivative(self, idx):
        return self._Y[np.asarray(idx, dtype=int)]


# -- serialization ----------------------------------------------------------

_MAGIC = "# gradmatch ode-model v1"


def _write_block(out, name, M):
    out.write(f"[{name}]\n")
    for row in np.atleast_2d(M):
        out.write(" ".join(repr(float(v)) for v in row) + "\n")


def dumps_model(model: OdeModel) -> str:
    out = io.StringIO()
    out.write(_MAGIC + "\n")
    out.write(f"family = {model.kernel.family}\n")
    out.write(f"gamma = {model.kernel.gamma!r}\n")
    out.write(f"ridge = {model.ridge!r}\n")
    out.write(f"p = {model.p}\n")
    out.write(f"m = {model.m}\n")
    if model.kernel.C is not None:
        _write_block(out, "C", model.kernel.C)
    _write_block(out, "anchors", model.anchors)
    _write_block(out, "coeffs", model.coeffs)
    return out.getvalue()


def loads_model(text: str) -> OdeModel:
    lines = text.splitlines()
    if not lines or lines[0].strip() != _MAGIC:
        raise ParseError("not a gradmatch model file (bad first line)")
    keys, blocks, current = {}, {}, None
    for lineno, raw in enumerate(lines[1:], start=2):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if line.startswith("[") and line.endswith("]"):
            current = line[1:-1]
            blocks[current] = []
        elif current is None:
            key, sep, value = line.partition("=")
            if not sep:
                raise ParseError(f"line {lineno}: expected 'key = value'")
            keys[key.strip()] = value.strip()
        else:
            try:
                blocks[current].append([float(v) for v in line.split()])
            except ValueError:
                raise ParseError(f"line {lineno}: non-numeric entry in block [{current}]") from None
    try:
        family, gamma, ridge = keys["family"], float(keys["gamma"]), float(keys["ridge"])
        p, m = int(keys["p"]), int(keys["m"])
        anchors = np.array(blocks["anchors"], dtype=float).reshape(m, p)
        coeffs = np.array(blocks["coeffs"], dtype=float).reshape(m, p)
    except (KeyError, ValueError) as exc:
        raise ParseError(f"incomplete or inconsistent model file: {exc}") from None
    C = np.array(blocks["C"], dtype=float).reshape(p, p) if "C" in blocks else None
    return OdeModel(OperatorKernel(family, gamma, C), anchors, coeffs, ridge)


def save_model(model: OdeModel, path) -> None:
    Path(path).write_text(dumps_model(model), encoding="utf-8")


def load_model(path) -> OdeModel:
    return loads_model(Path(path).read_text(encoding="utf-8"))

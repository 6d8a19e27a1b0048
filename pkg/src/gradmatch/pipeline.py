"""End-to-end estimation of an ODE vector field from noisy trajectories.

Step one smooths every state variable with leave-one-out tuned kernel ridge
regression. Step two regresses the smoother's derivative on its value with
an operator-valued kernel; its bandwidth and ridge penalty are chosen by
minimising the trajectory error against the observations.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from itertools import product

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from ._validation import check_trajectory
from .exceptions import NumericalError, ValidationError
from .kernel_learning import KernelLearnConfig, alternate_fit
from .operator_kernels import FAMILIES, OperatorKernel, StructureMatrix
from .simulate import (
    DEFAULT_SUBSTEPS,
    gm_error,
    predict_trajectory,
    smoothing_error,
    trajectory_error,
)
from .smoother import DEFAULT_GAMMA_GRID, DEFAULT_LAMBDA_GRID, KernelSmootherCV
from .sparse import SparseConfig, fit_sparse, sparsity_report
from .timeseries import TimeSeries, TimeSeriesBundle
from .vector_field import OdeModel, consensus, fit_multi, fit_ridge, sample_times

__all__ = ["MODES", "FitReport", "GradientMatchingODE", "grid_search"]

MODES = ("ridge", "sparse", "learn-C", "multi")


@dataclass
class FitReport:
    """Errors and hyperparameters of a fitted model.

    Errors are sums of squared residuals; for several series they are summed
    over the series. ``trajectory_mse`` divides by the number of observed
    values (observations times variables).
    """

    mode: str
    gamma: float
    ridge: float
    smoothing_error: float
    gm_error: float
    trajectory_error: float
    n_values: int
    smoother_gammas: list = field(default_factory=list)
    smoother_ridges: list = field(default_factory=list)
    lambda1: float | None = None
    alpha: float | None = None
    sim_weight: float | None = None
    zero_coeff_fraction: float | None = None
    zero_group_fraction: float | None = None
    structure: list | None = None

    @property
    def trajectory_mse(self) -> float:
        return self.trajectory_error / self.n_values

    def as_dict(self) -> dict:
        out = asdict(self)
        out["trajectory_mse"] = self.trajectory_mse
        return {k: v for k, v in out.items() if v is not None}

    def to_text(self) -> str:
        """Flat ``key = value`` summary."""
        lines = []
        for k, v in self.as_dict().items():
            if isinstance(v, list):
                v = " ".join(repr(float(x)) for x in np.ravel(v))
            elif isinstance(v, float):
                v = repr(v)
            lines.append(f"{k} = {v}")
        return "\n".join(lines) + "\n"


def _as_series(data):
    if isinstance(data, TimeSeriesBundle):
        return list(data)
    if isinstance(data, TimeSeries):
        return [data]
    return list(data)


def _total_error(model, smoothers, series, mode, substeps):
    return sum(trajectory_error(model, s, ts, mode, substeps) for s, ts in zip(smoothers, series))


def grid_search(fit_one, smoothers, series, gamma_grid, ridge_grid, mode="self-consistent",
                substeps=DEFAULT_SUBSTEPS, n_jobs=1):
    """Evaluate ``fit_one(gamma, ridge)`` on the grid; return the best point and all scores.

    Points that fail numerically score ``inf``. Ties keep the first point in
    grid order, so the result does not depend on ``n_jobs``.
    """
    points = list(product(gamma_grid, ridge_grid))
    if not points:
        raise ValidationError("empty hyperparameter grid")

    def score(pt):
        try:
            model = fit_one(*pt)
        except NumericalError:
            return np.inf
        return _total_error(model, smoothers, series, mode, substeps)

    if n_jobs is not None and n_jobs > 1:
        with ThreadPoolExecutor(max_workers=int(n_jobs)) as pool:
            scores = list(pool.map(score, points))
    else:
        scores = [score(pt) for pt in points]
    scores = np.asarray(scores, dtype=float)
    if not np.any(np.isfinite(scores)):
        raise NumericalError("every grid point diverged")
    best = int(np.argmin(scores))
    return points[best], scores


class GradientMatchingODE(BaseEstimator):
    """Learn ``dx/dt = h(x)`` from sampled trajectories by gradient matching.

    Parameters
    ----------
    kernel : {"decomposable", "transformable", "hadamard"}
    C : array-like, optional
        Output structure matrix; identity when omitted.
    n_anchors : int
        Number of anchor times at which the smoother is matched.
    anchor_mode : {"regular", "uniform"}
    gamma_grid, ridge_grid : sequences of float
        Grid for the vector-field bandwidth and ridge penalty.
    mode : {"ridge", "sparse", "learn-C", "multi"}
    lambda1, alpha : sparse-group-lasso weight and group share (``sparse``).
    sim_weight : similarity weight between series (``multi``).
    solver : {"direct", "sgd"} for ``multi``.
    outer_iters, inner_iters : alternation schedule (``learn-C``).
    trajectory_mode : {"self-consistent", "along-g"}
        How trajectories are reconstructed during the grid search.
    n_jobs : int
        Threads used for the grid search.
    random_state : seed for random anchor times and the stochastic solver.

    Attributes
    ----------
    model_ : OdeModel
    smoothers_ : list of KernelSmootherCV
    report_ : FitReport
    grid_scores_ : ndarray (len(gamma_grid), len(ridge_grid))
    """

    def __init__(self, kernel="decomposable", C=None, n_anchors=101, anchor_mode="regular",
                 gamma_grid=DEFAULT_GAMMA_GRID, ridge_grid=DEFAULT_LAMBDA_GRID, mode="ridge",
                 lambda1=0.0, alpha=0.5, sim_weight=0.1, solver="direct", outer_iters=10,
                 inner_iters=50, trajectory_mode="self-consistent", substeps=DEFAULT_SUBSTEPS,
                 n_jobs=1, random_state=None):
        self.kernel = kernel
        self.C = C
        self.n_anchors = n_anchors
        self.anchor_mode = anchor_mode
        self.gamma_grid = gamma_grid
        self.ridge_grid = ridge_grid
        self.mode = mode
        self.lambda1 = lambda1
        self.alpha = alpha
        self.sim_weight = sim_weight
        self.solver = solver
        self.outer_iters = outer_iters
        self.inner_iters = inner_iters
        self.trajectory_mode = trajectory_mode
        self.substeps = substeps
        self.n_jobs = n_jobs
        self.random_state = random_state

    def _check_params(self, p):
        if self.mode not in MODES:
            raise ValidationError(f"unknown mode {self.mode!r}; expected one of {MODES}")
        if self.kernel not in FAMILIES:
            raise ValidationError(f"unknown kernel family {self.kernel!r}")
        if self.mode == "learn-C" and self.kernel != "decomposable":
            raise ValidationError("structure learning needs the decomposable kernel")
        if self.kernel == "transformable":
            if self.C is not None:
                raise ValidationError("the transformable kernel takes no structure matrix")
            return None
        C = StructureMatrix.identity(p) if self.C is None else StructureMatrix(self.C)
        if C.p != p:
            raise ValidationError(f"C is {C.p}x{C.p} but the data has {p} variables")
        return C

    def fit(self, data, Y=None):
        """Fit on ``(t, Y)`` arrays, a :class:`TimeSeries`, or several series.

        ``multi`` mode needs at least two series sharing their time grid.
        """
        series = [TimeSeries(*check_trajectory(data, Y))] if Y is not None else _as_series(data)
        if not series:
            raise ValidationError("no time series given")
        if self.mode == "multi":
            if len(series) < 2:
                raise ValidationError("multi mode needs at least two time series")
            series = list(TimeSeriesBundle(series))
        elif len(series) != 1:
            raise ValidationError(f"mode {self.mode!r} fits a single time series, got {len(series)}")
        p = series[0].p
        C = self._check_params(p)

        self.smoothers_ = [KernelSmootherCV().fit(ts.times, ts.values) for ts in series]
        t0 = series[0].times
        self.taus_ = sample_times(self.n_anchors, t0[-1] - t0[0], self.anchor_mode,
                                  self.random_state, start=t0[0])

        def kern(gamma):
            return OperatorKernel(self.kernel, gamma, C)

        if self.mode == "multi":
            def fit_one(gamma, ridge):
                mm = fit_multi(self.smoothers_, self.taus_, kern(gamma), ridge, self.sim_weight,
                               self.solver, seed=self.random_state)
                return consensus(mm)
        else:
            def fit_one(gamma, ridge):
                return fit_ridge(self.smoothers_[0], self.taus_, kern(gamma), ridge)

        (gamma, ridge), scores = grid_search(fit_one, self.smoothers_, series, self.gamma_grid,
                                             self.ridge_grid, self.trajectory_mode, self.substeps,
                                             self.n_jobs)
        self.grid_scores_ = scores.reshape(len(self.gamma_grid), len(self.ridge_grid))
        self.gamma_, self.ridge_ = float(gamma), float(ridge)

        extra = {}
        if self.mode == "sparse":
            cfg = SparseConfig(self.lambda1, self.alpha)
            model, self.diagnostics_ = fit_sparse(self.smoothers_[0], self.taus_, kern(gamma), ridge, cfg)
            rep = sparsity_report(model)
            extra = dict(lambda1=float(self.lambda1), alpha=float(self.alpha),
                         zero_coeff_fraction=rep.coeff_fraction,
                         zero_group_fraction=rep.group_fraction)
        elif self.mode == "learn-C":
            cfg = KernelLearnConfig(self.outer_iters, self.inner_iters)
            _, _, learned, self.history_ = alternate_fit(self.smoothers_[0], self.taus_, gamma, ridge, cfg)
            model = fit_ridge(self.smoothers_[0], self.taus_, kern(gamma).with_structure(learned), ridge)
            extra = dict(structure=learned.C.ravel().tolist())
        else:
            model = fit_one(gamma, ridge)
            if self.mode == "multi":
                extra = dict(sim_weight=float(self.sim_weight))
        self.model_ = model
        self.series_ = series
        self.report_ = self._report(model, series, extra)
        self.n_features_in_ = p
        return self

    def _report(self, model, series, extra):
        sm = self.smoothers_
        return FitReport(
            mode=self.mode,
            gamma=self.gamma_,
            ridge=self.ridge_,
            smoothing_error=sum(smoothing_error(s, ts) for s, ts in zip(sm, series)),
            gm_error=sum(gm_error(model, s, self.taus_) for s in sm),
            trajectory_error=_total_error(model, sm, series, self.trajectory_mode, self.substeps),
            n_values=sum(ts.values.size for ts in series),
            smoother_gammas=[float(g) for s in sm for g in s.gammas_],
            smoother_ridges=[float(r) for s in sm for r in s.ridges_],
            **extra,
        )

    def predict(self, t, x0=None):
        """Integrate the learned field over ``t`` from ``x0`` (default: the smoothed first state)."""
        check_is_fitted(self, "model_")
        t = np.asarray(t, dtype=float)
        if x0 is None:
            x0 = self.smoothers_[0].predict(t[:1])[0]
        return predict_trajectory(self.model_, x0, t, self.substeps)

    @property
    def vector_field(self) -> OdeModel:
        check_is_fitted(self, "model_")
        return self.model_

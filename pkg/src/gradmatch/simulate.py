"""Ground-truth systems, fixed-step integration, noise and error metrics."""

from __future__ import annotations

from dataclasses import asdict, dataclass
from importlib import resources
from pathlib import Path

import numpy as np
from sklearn.utils import check_random_state

from .exceptions import BlowUpError, ConfigurationError, ParseError, ValidationError
from .timeseries import TimeSeries
from .vector_field import OdeModel, eval_h

__all__ = [
    "FhnParams",
    "CalciumParams",
    "NoiseSpec",
    "fhn_rhs",
    "calcium_rhs",
    "integrate_rk4",
    "integrate_rk4_batch",
    "model_rhs",
    "simulate",
    "add_noise",
    "smoothing_error",
    "gm_error",
    "trajectory_error",
    "trajectory_mse",
    "predict_trajectory",
    "error_map",
    "read_params",
    "write_params",
    "FHN_X0",
    "FHN_HORIZON",
    "FHN_N",
    "CALCIUM_N",
    "CALCIUM_SUBSTEPS",
]

FHN_X0 = (-1.0, 1.0)
FHN_HORIZON = 20.0
FHN_N = 41
CALCIUM_N = 67
DEFAULT_SUBSTEPS = 20
# the calcium system is stiff (fastest mode near -1000); RK4 needs h < ~2.7e-3
CALCIUM_SUBSTEPS = 200


@dataclass(frozen=True)
class FhnParams:
    a: float = 0.2
    b: float = 0.2
    c: float = 3.0

    def __post_init__(self):
        if self.c == 0:
            raise ValidationError("FitzHugh-Nagumo parameter c must be non-zero")


@dataclass(frozen=True)
class CalciumParams:
    """Rate constants ``k1..k11``, Michaelis constants ``Km1..Km6`` and a default run.

    No standard parameter values accompany this benchmark; the
    shipped defaults (``data/calcium.txt``) produce sustained oscillations
    with a period of about 9.3 time units. Load other values with
    :func:`read_params`.
    """

    k: tuple = (0.09, 2.0, 1.27, 3.73, 1.27, 32.24, 2.0, 0.05, 13.58, 153.0, 4.85)
    km: tuple = (0.19, 0.73, 29.09, 2.67, 0.16, 0.05)
    x0: tuple = (0.12, 0.31, 0.0058, 4.3)
    horizon: float = 20.0

    def __post_init__(self):
        k = tuple(float(v) for v in self.k)
        km = tuple(float(v) for v in self.km)
        if len(k) != 11 or len(km) != 6:
            raise ValidationError("calcium model needs 11 rate constants and 6 Michaelis constants")
        if any(v <= 0 for v in km):
            raise ValidationError("Michaelis constants must be positive")
        object.__setattr__(self, "k", k)
        object.__setattr__(self, "km", km)
        object.__setattr__(self, "x0", tuple(float(v) for v in self.x0))

    @classmethod
    def default(cls) -> "CalciumParams":
        return read_params(resources.files("gradmatch") / "data" / "calcium.txt", kind="calcium")


@dataclass(frozen=True)
class NoiseSpec:
    variance: float = 0.1
    mode: str = "gaussian"
    seed: int | None = None

    def __post_init__(self):
        if not (np.isfinite(self.variance) and self.variance > 0):
            raise ValidationError(f"noise variance must be positive, got {self.variance}")
        if self.mode not in ("gaussian", "zero-truncated"):
            raise ValidationError(f"unknown noise mode {self.mode!r}")


def fhn_rhs(params: FhnParams, x) -> np.ndarray:
    """FitzHugh-Nagumo field; ``x`` is ``(V, R)`` or a stack of such rows."""
    x = np.asarray(x, dtype=float)
    V, R = x[..., 0], x[..., 1]
    a, b, c = params.a, params.b, params.c
    return np.stack([c * (V - V**3 / 3.0 + R), -(V - a + b * R) / c], axis=-1)


def calcium_rhs(params: CalciumParams, x) -> np.ndarray:
    """Four-variable calcium oscillation model, state ``(G_alpha, PLC, Ca_cyt, Ca_er)``."""
    x = np.asarray(x, dtype=float)
    G, P, Cc, Cr = x[..., 0], x[..., 1], x[..., 2], x[..., 3]
    k1, k2, k3, k4, k5, k6, k7, k8, k9, k10, k11 = params.k
    km = params.km
    states = (G, G, P, Cr, Cc, Cc)
    for i, s in enumerate(states):
        if np.any(s + km[i] == 0):
            raise ValidationError(f"Michaelis denominator {i + 1} vanishes")
    R1, R2, R3, R4, R5, R6 = (s / (s + K) for s, K in zip(states, km))
    exchange = k7 * P * Cc * R4
    return np.stack(
        [
            k1 + k2 * G - k3 * P * R1 - k4 * Cc * R2,
            k5 * G - k6 * R3,
            exchange + k8 * P + k9 * G - k10 * R5 - k11 * R6,
            -exchange + k11 * R6,
        ],
        axis=-1,
    )


def _rk4_step(f, x, h):
    k1 = f(x)
    k2 = f(x + 0.5 * h * k1)
    k3 = f(x + 0.5 * h * k2)
    k4 = f(x + h * k3)
    return x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def integrate_rk4(f, x0, t_grid, substeps: int = DEFAULT_SUBSTEPS, bound: float = np.inf):
    """Classic fourth-order Runge-Kutta on a time grid.

    Each interval ``[t_grid[i], t_grid[i+1]]`` is split into ``substeps``
    equal steps. Returns an array of shape ``(len(t_grid), p)`` whose first
    row is ``x0``.

    Raises
    ------
    BlowUpError
        If the state becomes non-finite or its norm exceeds ``bound``.
        The exception carries the time reached and the partial trajectory.
    """
    substeps = int(substeps)
    if substeps < 1:
        raise ValidationError("substeps must be >= 1")
    t_grid = np.atleast_1d(np.asarray(t_grid, dtype=float))
    if t_grid.ndim != 1 or np.any(np.diff(t_grid) <= 0):
        raise ValidationError("t_grid must be strictly increasing")
    x = np.array(x0, dtype=float)
    out = np.empty((t_grid.shape[0],) + x.shape)
    out[0] = x
    for i in range(1, t_grid.shape[0]):
        h = (t_grid[i] - t_grid[i - 1]) / substeps
        for j in range(substeps):
            x = _rk4_step(f, x, h)
            if not np.all(np.isfinite(x)) or np.linalg.norm(x) > bound:
                t_reached = t_grid[i - 1] + j * h
                raise BlowUpError(
                    f"integration blew up near t={t_reached:.6g}", t_reached, out[:i].copy()
                )
        out[i] = x
    return out


def integrate_rk4_batch(f, X0, t_grid, substeps: int = DEFAULT_SUBSTEPS, bound: float = 1e6):
    """Integrate many initial conditions at once.

    ``f`` must map an ``(q, p)`` stack of states to an ``(q, p)`` stack of
    derivatives. Rows that blow up are frozen and flagged instead of raising.

    Returns
    -------
    traj : ndarray of shape (len(t_grid), q, p)
        NaN after a row has blown up.
    ok : ndarray of bool, shape (q,)
    """
    t_grid = np.atleast_1d(np.asarray(t_grid, dtype=float))
    X = np.array(X0, dtype=float, ndmin=2)
    ok = np.ones(X.shape[0], dtype=bool)
    out = np.full((t_grid.shape[0],) + X.shape, np.nan)
    out[0] = X
    for i in range(1, t_grid.shape[0]):
        h = (t_grid[i] - t_grid[i - 1]) / substeps
        for _ in range(substeps):
            if not ok.any():
                return out, ok
            X[ok] = _rk4_step(f, X[ok], h)
            bad = ok & ~(np.all(np.isfinite(X), axis=1) & (np.linalg.norm(X, axis=1) <= bound))
            ok &= ~bad
            X[bad] = 0.0
        out[i, ok] = X[ok]
    return out, ok


def model_rhs(model: OdeModel):
    """Fast, unchecked ``x -> h(x)`` for use inside integrators."""
    anchors, coeffs, gamma = model.anchors, model.coeffs, model.kernel.gamma
    family, C = model.kernel.family, model.kernel.C
    a2 = np.sum(anchors * anchors, axis=1)
    if family == "decomposable":
        AC = coeffs @ C

        def rhs(x):
            X = np.atleast_2d(x)
            d2 = np.sum(X * X, axis=1)[:, None] + a2[None, :] - 2.0 * X @ anchors.T
            out = np.exp(-gamma * np.maximum(d2, 0.0)) @ AC
            return out[0] if np.ndim(x) == 1 else out

        return rhs

    return lambda x: eval_h(model, x)


def simulate(f, x0, times, substeps: int = DEFAULT_SUBSTEPS) -> TimeSeries:
    """Noiseless trajectory of ``dx/dt = f(x)`` sampled at ``times``."""
    return TimeSeries(times, integrate_rk4(f, x0, times, substeps))


def add_noise(traj: TimeSeries, spec: NoiseSpec) -> TimeSeries:
    """Add i.i.d. ``N(0, variance)`` noise; ``zero-truncated`` clamps negatives to zero."""
    rng = check_random_state(spec.seed)
    noisy = traj.values + rng.normal(0.0, np.sqrt(spec.variance), size=traj.values.shape)
    if spec.mode == "zero-truncated":
        noisy = np.maximum(noisy, 0.0)
    return TimeSeries(traj.times, noisy)


# -- error metrics ------------------------------------------------------------


def smoothing_error(smoother, ts: TimeSeries) -> float:
    """``sum_l ||y_l - g(t_l)||^2``."""
    return float(np.sum((ts.values - smoother.predict(ts.times)) ** 2))


def gm_error(model: OdeModel, smoother, taus) -> float:
    """``sum_l ||dg/dt(tau_l) - h(g(tau_l))||^2``."""
    taus = np.atleast_1d(np.asarray(taus, dtype=float))
    return float(np.sum((smoother.predict_derivative(taus) - model_rhs(model)(smoother.predict(taus))) ** 2))


def predict_trajectory(model, x0, times, substeps: int = DEFAULT_SUBSTEPS, bound: float = 1e6):
    """Integrate the learned field from ``x0``; raises :class:`BlowUpError` on divergence."""
    f = model_rhs(model) if isinstance(model, OdeModel) else model
    return integrate_rk4(f, x0, times, substeps, bound)


def _along_g(model, smoother, times, substeps):
    # g(t_0) + cumulative Simpson quadrature of h(g(tau)) on each interval
    f = model_rhs(model)
    out = np.empty((times.shape[0], model.p))
    out[0] = smoother.predict(times[:1])[0]
    for i in range(1, times.shape[0]):
        nodes = np.linspace(times[i - 1], times[i], 2 * substeps + 1)
        vals = f(smoother.predict(nodes))
        h = (times[i] - times[i - 1]) / (2 * substeps)
        w = np.ones(nodes.shape[0])
        w[1:-1:2], w[2:-1:2] = 4.0, 2.0
        out[i] = out[i - 1] + (h / 3.0) * (w @ vals)
    return out


def trajectory_error(model: OdeModel, smoother, ts: TimeSeries, mode: str = "self-consistent",
                     substeps: int = DEFAULT_SUBSTEPS, reference=None) -> float:
    """``sum_l ||y_l - xhat(t_l)||^2`` over all observations.

    ``self-consistent`` integrates ``dx/dt = h(x)`` from ``g(t_0)``;
    ``along-g`` adds the quadrature of ``h(g(tau))`` to ``g(t_0)``.
    ``reference`` replaces ``ts.values`` as the comparison target (e.g. the
    noiseless trajectory). A blow-up yields ``inf``.
    """
    target = ts.values if reference is None else np.asarray(reference, dtype=float)
    if mode == "self-consistent":
        x0 = smoother.predict(ts.times[:1])[0]
        try:
            xhat = predict_trajectory(model, x0, ts.times, substeps)
        except BlowUpError:
            return float("inf")
    elif mode == "along-g":
        xhat = _along_g(model, smoother, ts.times, substeps)
    else:
        raise ValidationError(f"unknown trajectory mode {mode!r}")
    return float(np.sum((target - xhat) ** 2))


def trajectory_mse(xhat, reference) -> float:
    """Mean squared error over all observations and state components."""
    d = np.asarray(xhat, dtype=float) - np.asarray(reference, dtype=float)
    return float(np.mean(d * d))


def error_map(model, truth_rhs, v_grid, r_grid, horizon: float, n_points: int = FHN_N,
              substeps: int = DEFAULT_SUBSTEPS, bound: float = 1e6) -> np.ndarray:
    """Trajectory MSE between the learned and true systems over a grid of initial states.

    Cell ``[i, j]`` starts both systems at ``(v_grid[i], r_grid[j])``,
    integrates them over ``[0, horizon]`` sampled at ``n_points`` times and
    records :func:`trajectory_mse`. Cells where either run blows up are
    ``inf``.
    """
    v_grid = np.atleast_1d(np.asarray(v_grid, dtype=float))
    r_grid = np.atleast_1d(np.asarray(r_grid, dtype=float))
    times = np.linspace(0.0, horizon, n_points)
    X0 = np.array([(v, r) for v in v_grid for r in r_grid])
    f = model_rhs(model) if isinstance(model, OdeModel) else model
    learned, ok_l = integrate_rk4_batch(f, X0, times, substeps, bound)
    true, ok_t = integrate_rk4_batch(truth_rhs, X0, times, substeps, bound)
    d = learned - true
    errs = np.mean(d * d, axis=(0, 2))
    errs[~(ok_l & ok_t)] = np.inf
    return errs.reshape(v_grid.shape[0], r_grid.shape[0])


# -- parameter files --------------------------------------------------------


def _parse_kv(path):
    out = {}
    for lineno, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise ParseError(f"{path}:{lineno}: expected 'key = value'")
        out[key.strip()] = value.strip()
    return out


def _floats(text):
    return tuple(float(v) for v in text.replace(",", " ").split())


def read_params(path, kind: str | None = None):
    """Read FHN or calcium parameters from a ``key = value`` text file."""
    kv = _parse_kv(path)
    kind = kind or kv.pop("model", None)
    kv.pop("model", None)
    try:
        if kind == "fhn":
            return FhnParams(float(kv["a"]), float(kv["b"]), float(kv["c"]))
        if kind == "calcium":
            k = tuple(float(kv[f"k{i}"]) for i in range(1, 12))
            km = tuple(float(kv[f"Km{i}"]) for i in range(1, 7))
            extra = {}
            if "x0" in kv:
                extra["x0"] = _floats(kv["x0"])
            if "horizon" in kv:
                extra["horizon"] = float(kv["horizon"])
            return CalciumParams(k, km, **extra)
    except KeyError as exc:
        raise ParseError(f"{path}: missing parameter {exc.args[0]}") from None
    except ValueError as exc:
        raise ParseError(f"{path}: {exc}") from None
    raise ConfigurationError(f"{path}: unknown or missing model kind {kind!r}")


def write_params(params, path) -> None:
    lines = []
    if isinstance(params, FhnParams):
        lines.append("model = fhn")
        lines += [f"{k} = {v!r}" for k, v in asdict(params).items()]
    elif isinstance(params, CalciumParams):
        lines.append("model = calcium")
        lines += [f"k{i} = {v!r}" for i, v in enumerate(params.k, start=1)]
        lines += [f"Km{i} = {v!r}" for i, v in enumerate(params.km, start=1)]
        lines.append("x0 = " + " ".join(repr(v) for v in params.x0))
        lines.append(f"horizon = {params.horizon!r}")
    else:
        raise ValidationError(f"cannot write parameters of type {type(params).__name__}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")

"""Learn ODE vector fields from noisy trajectories by gradient matching.

Every subcommand accepts ``--config FILE`` with ``key = value`` lines whose
keys are the long option names (dashes or underscores). Options given on
the command line override the file.

Exit status is 0 on success, 2 for invalid input or configuration and 3
for numerical failures.
"""

from __future__ import annotations

import argparse
import csv
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .exceptions import BlowUpError, NumericalError, ValidationError
from .experiments import compare_methods, multi_error_map, sweep_alpha
from .operator_kernels import FAMILIES
from .pipeline import MODES, GradientMatchingODE
from .simulate import (
    CALCIUM_N,
    CALCIUM_SUBSTEPS,
    DEFAULT_SUBSTEPS,
    FHN_HORIZON,
    FHN_N,
    FHN_X0,
    CalciumParams,
    FhnParams,
    NoiseSpec,
    add_noise,
    calcium_rhs,
    fhn_rhs,
    predict_trajectory,
    read_params,
    simulate,
)
from .smoother import DEFAULT_GAMMA_GRID, DEFAULT_LAMBDA_GRID
from .timeseries import TimeSeries, read_csv, write_csv
from .vector_field import load_model, save_model

EXIT_OK, EXIT_INPUT, EXIT_NUMERIC = 0, 2, 3

_NOTE_EXCLUDED = "# generalized profiling (Ramsay et al.) is not run; only the three methods below are compared"


def _positive_float(text):
    v = float(text)
    if not v > 0:
        raise argparse.ArgumentTypeError(f"must be positive, got {text}")
    return v


def _positive_int(text):
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {text}")
    return v


def _unit_float(text):
    v = float(text)
    if not 0.0 <= v <= 1.0:
        raise argparse.ArgumentTypeError(f"must lie in [0, 1], got {text}")
    return v


def _nonneg_float(text):
    v = float(text)
    if not v >= 0:
        raise argparse.ArgumentTypeError(f"must be non-negative, got {text}")
    return v


def _read_config(path):
    out = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValidationError(f"{path}:{lineno}: expected 'key = value'")
            key, value = (s.strip() for s in line.split("=", 1))
            out[key.replace("-", "_")] = value
    return out


def _apply_config(parser, config):
    """Turn config strings into typed defaults of ``parser``."""
    actions = {a.dest: a for a in parser._actions}
    defaults = {}
    for key, text in config.items():
        if key not in actions or key in ("help", "config"):
            raise ValidationError(f"unknown config key {key!r}")
        act = actions[key]
        if isinstance(act, (argparse._StoreTrueAction, argparse._StoreFalseAction)):
            defaults[key] = text.lower() in ("1", "true", "yes", "on")
            continue
        conv = act.type or str
        try:
            if act.nargs in ("+", "*") or isinstance(act.nargs, int):
                defaults[key] = [conv(tok) for tok in text.split()]
            else:
                defaults[key] = conv(text)
        except (ValueError, argparse.ArgumentTypeError) as exc:
            raise ValidationError(f"config key {key!r}: {exc}") from exc
        if act.choices is not None:
            vals = defaults[key] if isinstance(defaults[key], list) else [defaults[key]]
            bad = [v for v in vals if v not in act.choices]
            if bad:
                raise ValidationError(f"config key {key!r}: invalid choice {bad[0]!r}")
    parser.set_defaults(**defaults)


def _grid_args(p):
    p.add_argument("--gamma-grid", type=_positive_float, nargs="+", default=list(DEFAULT_GAMMA_GRID))
    p.add_argument("--ridge-grid", type=_positive_float, nargs="+", default=list(DEFAULT_LAMBDA_GRID))
    p.add_argument("--m", type=_positive_int, default=101, help="number of anchor times")
    p.add_argument("--tau-mode", choices=("regular", "uniform"), default="regular")
    p.add_argument("--jobs", type=_positive_int, default=1)
    p.add_argument("--seed", type=int, default=None)


def _estimator(args, **over):
    kw = dict(n_anchors=args.m, anchor_mode=args.tau_mode, gamma_grid=tuple(args.gamma_grid),
              ridge_grid=tuple(args.ridge_grid), n_jobs=args.jobs, random_state=args.seed)
    kw.update(over)
    return GradientMatchingODE(**kw)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gradmatch", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="generate noiseless and noisy benchmark trajectories")
    p.add_argument("--model", choices=("fhn", "calcium"), default="fhn")
    p.add_argument("--params", type=Path, help="parameter file (key = value)")
    p.add_argument("--n", type=_positive_int, default=None, help="number of samples")
    p.add_argument("--horizon", type=_positive_float, default=None)
    p.add_argument("--x0", type=float, nargs="+", default=None)
    p.add_argument("--sigma2", type=_positive_float, default=0.1, help="noise variance")
    p.add_argument("--noise", choices=("gaussian", "zero-truncated"), default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out-truth", type=Path, default=Path("truth.csv"))
    p.add_argument("--out-noisy", type=Path, default=Path("noisy.csv"))

    p = sub.add_parser("fit", help="learn a vector field from one or more trajectories")
    p.add_argument("--data", type=Path, nargs="+", required=False)
    p.add_argument("--mode", choices=MODES, default="ridge")
    p.add_argument("--kernel", choices=FAMILIES, default="decomposable")
    p.add_argument("--lambda1", type=_nonneg_float, default=0.0)
    p.add_argument("--alpha", type=_unit_float, default=0.5)
    p.add_argument("--sim-weight", type=_nonneg_float, default=0.1)
    p.add_argument("--solver", choices=("direct", "sgd"), default="direct")
    p.add_argument("--outer-iters", type=_positive_int, default=10)
    p.add_argument("--inner-iters", type=_positive_int, default=50)
    _grid_args(p)
    p.add_argument("--out-model", type=Path, default=Path("model.txt"))
    p.add_argument("--out-report", type=Path, default=Path("report.txt"))

    p = sub.add_parser("trajectory", help="integrate a saved vector field")
    p.add_argument("--model-file", type=Path, required=False)
    p.add_argument("--x0", type=float, nargs="+", required=False)
    p.add_argument("--horizon", type=_positive_float, default=FHN_HORIZON)
    p.add_argument("--n", type=_positive_int, default=FHN_N)
    p.add_argument("--substeps", type=_positive_int, default=DEFAULT_SUBSTEPS)
    p.add_argument("--out", type=Path, default=Path("trajectory.csv"))

    p = sub.add_parser("sweep-alpha", help="sparsity / trajectory-error trade-off")
    p.add_argument("--data", type=Path, required=False)
    p.add_argument("--alphas", type=_unit_float, nargs="+", default=[0.0, 0.5, 1.0])
    p.add_argument("--lambda1-grid", type=_nonneg_float, nargs="+",
                   default=[0.001, 0.003, 0.01, 0.03, 0.1, 0.3])
    p.add_argument("--gamma", type=_positive_float, default=None)
    p.add_argument("--ridge", type=_positive_float, default=None)
    p.add_argument("--truth", type=Path, default=None,
                   help="noiseless trajectory; errors are measured against it when given")
    p.add_argument("--select-m", type=_positive_int, default=101,
                   help="anchor count for the ridge grid search (penalty rescaled to --m)")
    _grid_args(p)
    p.set_defaults(m=404)
    p.add_argument("--out", type=Path, default=Path("sweep.csv"))

    p = sub.add_parser("error-map", help="true trajectory error over a grid of initial states")
    p.add_argument("--data", type=Path, nargs="+", required=False)
    p.add_argument("--params", type=Path, help="true FHN parameters (key = value)")
    p.add_argument("--v-grid", type=float, nargs=3, default=[-2.0, 2.0, 9], metavar=("LO", "HI", "NUM"))
    p.add_argument("--r-grid", type=float, nargs=3, default=[-2.0, 2.0, 9], metavar=("LO", "HI", "NUM"))
    p.add_argument("--horizon", type=_positive_float, default=FHN_HORIZON)
    p.add_argument("--n", type=_positive_int, default=FHN_N)
    p.add_argument("--sim-weight", type=_nonneg_float, default=0.1)
    _grid_args(p)
    p.add_argument("--out", type=Path, default=Path("error_map.csv"))

    p = sub.add_parser("compare", help="kernel method versus parametric baselines")
    p.add_argument("--data", type=Path, required=False, help="noisy observations")
    p.add_argument("--truth", type=Path, required=False, help="noiseless trajectory")
    p.add_argument("--x0", type=float, nargs="+", default=None,
                   help="known initial state for the parametric fits (default: first true state)")
    p.add_argument("--restarts", type=_positive_int, default=100)
    _grid_args(p)
    p.add_argument("--out", type=Path, default=Path("compare.csv"))

    for p in sub.choices.values():
        p.add_argument("--config", type=Path, help="key = value file; flags override it")
    return parser


def _require(args, *names):
    missing = [n for n in names if getattr(args, n) in (None, [])]
    if missing:
        raise ValidationError("missing required option(s): " + ", ".join("--" + n.replace("_", "-") for n in missing))


def _grid(spec):
    lo, hi, num = spec
    if num < 1 or num != int(num):
        raise ValidationError("grid size must be a positive integer")
    return np.linspace(lo, hi, int(num))


def cmd_simulate(args):
    if args.model == "fhn":
        params = read_params(args.params, "fhn") if args.params else FhnParams()
        rhs = lambda x: fhn_rhs(params, x)  # noqa: E731
        x0 = FHN_X0 if args.x0 is None else args.x0
        horizon = args.horizon or FHN_HORIZON
        n = args.n or FHN_N
        noise = args.noise or "gaussian"
        substeps = DEFAULT_SUBSTEPS
    else:
        params = read_params(args.params, "calcium") if args.params else CalciumParams.default()
        rhs = lambda x: calcium_rhs(params, x)  # noqa: E731
        x0 = params.x0 if args.x0 is None else args.x0
        horizon = args.horizon or params.horizon
        n = args.n or CALCIUM_N
        noise = args.noise or "zero-truncated"
        substeps = CALCIUM_SUBSTEPS
    x0 = np.asarray(x0, dtype=float)
    times = np.linspace(0.0, horizon, n)
    truth = simulate(rhs, x0, times, substeps)
    noisy = add_noise(truth, NoiseSpec(args.sigma2, noise, args.seed))
    write_csv(truth, args.out_truth)
    write_csv(noisy, args.out_noisy)
    return [args.out_truth, args.out_noisy]


def cmd_fit(args):
    _require(args, "data")
    series = [read_csv(p) for p in args.data]
    if args.mode == "multi" and len(series) < 2:
        raise ValidationError("--mode multi needs at least two --data files")
    if args.mode != "multi" and len(series) != 1:
        raise ValidationError(f"--mode {args.mode} takes exactly one --data file")
    est = _estimator(args, kernel=args.kernel, mode=args.mode, lambda1=args.lambda1, alpha=args.alpha,
                     sim_weight=args.sim_weight, solver=args.solver, outer_iters=args.outer_iters,
                     inner_iters=args.inner_iters)
    est.fit(series if args.mode == "multi" else series[0])
    save_model(est.model_, args.out_model)
    args.out_report.write_text(est.report_.to_text(), encoding="utf-8")
    return est


def cmd_trajectory(args):
    _require(args, "model_file", "x0")
    model = load_model(args.model_file)
    x0 = np.asarray(args.x0, dtype=float)
    if x0.shape != (model.p,):
        raise ValidationError(f"--x0 needs {model.p} values, got {x0.size}")
    times = np.linspace(0.0, args.horizon, args.n)
    traj = predict_trajectory(model, x0, times, args.substeps)
    write_csv(TimeSeries(times, traj), args.out)
    return traj


def cmd_sweep_alpha(args):
    _require(args, "data")
    noisy = read_csv(args.data)
    truth = read_csv(args.truth) if args.truth else None
    res = sweep_alpha(noisy, args.alphas, args.lambda1_grid, args.m, args.gamma, args.ridge, truth,
                      args.select_m, estimator=_estimator(args))
    with open(args.out, "w", newline="\n", encoding="utf-8") as fh:
        fh.write(f"# gamma = {res.gamma!r}\n# ridge = {res.ridge!r}\n# reference = {res.reference}\n")
        fh.write(f"# dense trajectory_error = {res.dense_error!r}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["alpha", "lambda1", "trajectory_error", "trajectory_mse",
                    "zero_coeff_fraction", "zero_group_fraction"])
        for r in res.rows:
            w.writerow([repr(r.alpha), repr(r.lambda1), repr(r.trajectory_error), repr(r.trajectory_mse),
                        repr(r.zero_coeff_fraction), repr(r.zero_group_fraction)])
    return res


def cmd_error_map(args):
    _require(args, "data")
    series = [read_csv(p) for p in args.data]
    params = read_params(args.params, "fhn") if args.params else FhnParams()
    v, r = _grid(args.v_grid), _grid(args.r_grid)
    est = _estimator(args, sim_weight=args.sim_weight)
    _, grid = multi_error_map(series, v, r, args.horizon, args.n, params, estimator=est)
    with open(args.out, "w", newline="\n", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["v0", "r0", "mse"])
        for i, vi in enumerate(v):
            for j, rj in enumerate(r):
                w.writerow([repr(float(vi)), repr(float(rj)), repr(float(grid[i, j]))])
    return grid


def cmd_compare(args):
    _require(args, "data", "truth")
    noisy, truth = read_csv(args.data), read_csv(args.truth)
    rows = compare_methods(truth, noisy, x0=args.x0, restarts=args.restarts, seed=args.seed,
                           estimator=_estimator(args))
    with open(args.out, "w", newline="\n", encoding="utf-8") as fh:
        fh.write(_NOTE_EXCLUDED + "\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["method", "n_params", "mse"])
        for r in rows:
            w.writerow([r.method, r.n_params, repr(r.mse)])
    return rows


COMMANDS = {
    "simulate": cmd_simulate,
    "fit": cmd_fit,
    "trajectory": cmd_trajectory,
    "sweep-alpha": cmd_sweep_alpha,
    "error-map": cmd_error_map,
    "compare": cmd_compare,
}


def parse_args(argv=None):
    parser = build_parser()
    argv = list(sys.argv[1:] if argv is None else argv)
    args = parser.parse_args(argv)
    if args.config is not None:
        sub = parser._subparsers._group_actions[0].choices[args.command]
        _apply_config(sub, _read_config(args.config))
        args = parser.parse_args(argv)
    return args


def main(argv=None) -> int:
    prog = "gradmatch"
    try:
        args = parse_args(argv)
    except SystemExit as exc:  # argparse usage errors already printed
        return int(exc.code or 0)
    except (ValidationError, OSError) as exc:
        print(f"{prog}: error: config: {exc}", file=sys.stderr)
        return EXIT_INPUT
    try:
        with np.errstate(over="ignore", invalid="ignore"):
            COMMANDS[args.command](args)
    except BlowUpError as exc:
        print(f"{prog} {args.command}: numerical error: {exc} (t = {exc.t_reached!r})", file=sys.stderr)
        return EXIT_NUMERIC
    except NumericalError as exc:
        print(f"{prog} {args.command}: numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ValidationError, OSError) as exc:
        print(f"{prog} {args.command}: input error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())

"""Command-line front end.

Subcommands::

    cqrkit fit DATA.csv --method {ols,qr,cqr,acqr} [...]
    cqrkit simulate (--preset exN | --config CFG.json) [...]
    cqrkit efficiency --dist KIND [...]
    cqrkit curve --family {t,mixnormal,double_gamma,ratio} [...]

Exit status is 0 on success, 2 for bad input and 3 when an estimator or
numerical routine fails.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .distributions import ErrorDistribution
from .efficiency import delta_curve, efficiency_report, ratio_curve
from .estimators import (
    Dataset,
    EstimationError,
    QuantileGrid,
    default_lambda_grid,
    fit_acqr,
    fit_cqr,
    fit_ols,
    fit_qr,
)
from .simulation import METHODS, PRESET_ERRORS, SimulationConfig, preset, run_study

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_NUMERICAL = 3


class InputError(Exception):
    """Bad user input; reported with exit status 2."""


DEFAULT_CURVE_GRIDS = {
    "student_t": np.linspace(2.5, 50.0, 96),
    "normal_mixture": np.round(np.arange(1, 20) * 0.05, 10),
    "double_gamma_mixture": np.arange(0.0, 41.0),
}


def read_csv(path, response: str = "y", center=None) -> Dataset:
    """Load a comma-separated file with a header row into a :class:`Dataset`."""
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc.strerror or exc}") from None
    except UnicodeDecodeError:
        raise InputError(f"{path} is not UTF-8 text") from None
    rows = [r for r in rows if r and any(cell.strip() for cell in r)]
    if not rows:
        raise InputError(f"{path} is empty")
    header = [h.strip() for h in rows[0]]
    if response not in header:
        raise InputError(f"{path} has no response column {response!r} (columns: {', '.join(header)})")
    if len(set(header)) != len(header):
        raise InputError(f"{path} has duplicate column names")
    body = rows[1:]
    if not body:
        raise InputError(f"{path} has a header but no data rows")
    try:
        values = np.array([[float(c) for c in r] for r in body], dtype=float)
    except ValueError as exc:
        raise InputError(f"{path}: non-numeric entry ({exc})") from None
    if values.ndim != 2 or values.shape[1] != len(header):
        raise InputError(f"{path}: every row must have {len(header)} fields")
    if not np.all(np.isfinite(values)):
        raise InputError(f"{path}: entries must be finite")
    j = header.index(response)
    pred = [i for i in range(len(header)) if i != j]
    names = tuple(header[i] for i in pred)
    return Dataset(values[:, pred], values[:, j], names, center)


def _write_text(out, text: str) -> None:
    if out in (None, "-"):
        sys.stdout.write(text)
    else:
        Path(out).write_text(text, encoding="utf-8")


def _write_json(out, payload) -> None:
    _write_text(out, json.dumps(payload, indent=2, allow_nan=False) + "\n")


def _write_rows(out, header, rows) -> None:
    lines = [",".join(header)]
    lines += [",".join(repr(float(v)) if not isinstance(v, (int, np.integer)) else str(v) for v in row) for row in rows]
    _write_text(out, "\n".join(lines) + "\n")


def _parse_floats(text: str) -> list[float]:
    try:
        vals = [float(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise InputError(f"expected a comma-separated list of numbers, got {text!r}") from None
    if not vals or not all(math.isfinite(v) for v in vals):
        raise InputError(f"expected finite numbers, got {text!r}")
    return vals


def _grid_from_args(args) -> QuantileGrid:
    try:
        if args.levels:
            return QuantileGrid(tuple(_parse_floats(args.levels)))
        return QuantileGrid.equally_spaced(args.K)
    except ValueError as exc:
        raise InputError(str(exc)) from None


def _distribution_from_args(args) -> ErrorDistribution:
    kind = args.dist
    params = {}
    for name in ("v", "r", "alpha", "var"):
        val = getattr(args, name, None)
        if val is not None:
            params[name] = val
    try:
        probe = ErrorDistribution(kind)  # resolves aliases, default parameters
        allowed = set(probe.params)
        extra = set(params) - allowed
        if extra:
            raise InputError(f"{probe.kind} takes no parameter(s) {sorted(extra)}")
        return ErrorDistribution(probe.kind, params, args.scale)
    except (ValueError, TypeError) as exc:
        raise InputError(str(exc)) from None


# ---------------------------------------------------------------------------


def cmd_fit(args) -> int:
    data = read_csv(args.data, args.response)
    if args.method == "qr":
        if not 0.0 < args.tau < 1.0:
            raise InputError(f"--tau must lie in (0, 1), got {args.tau}")
        fit = fit_qr(data, args.tau)
    elif args.method == "ols":
        fit = fit_ols(data)
    elif args.method == "cqr":
        fit = fit_cqr(data, _grid_from_args(args))
    else:
        if not args.validation:
            raise InputError("--method acqr needs --validation")
        val = read_csv(args.validation, args.response, data.center)
        if val.names != data.names:
            raise InputError("training and validation files have different predictor columns")
        if args.lambdas:
            lams = _parse_floats(args.lambdas)
            if any(v < 0 for v in lams):
                raise InputError("--lambdas must be nonnegative")
        else:
            lams = default_lambda_grid(data.n, args.n_lambdas)
        fit = fit_acqr(data, val, _grid_from_args(args), lams, weight_exponent=args.weight_exponent)
    _write_json(args.out, fit.to_dict())
    return EXIT_OK


def cmd_simulate(args) -> int:
    overrides = {}
    if args.methods:
        overrides["methods"] = tuple(m.strip() for m in args.methods.split(",") if m.strip())
    try:
        if args.config:
            try:
                cfg = SimulationConfig.from_json(args.config)
            except OSError as exc:
                raise InputError(f"cannot read {args.config}: {exc.strerror or exc}") from None
            except json.JSONDecodeError as exc:
                raise InputError(f"{args.config} is not valid JSON: {exc}") from None
            changes = dict(overrides)
            if args.reps is not None:
                changes["replications"] = args.reps
            if args.seed is not None:
                changes["seed"] = args.seed
            if changes:
                record = cfg.to_dict()
                record.update(changes)
                cfg = SimulationConfig.from_dict(record)
        else:
            cfg = preset(
                args.preset,
                replications=100 if args.reps is None else args.reps,
                seed=0 if args.seed is None else args.seed,
                **overrides,
            )
    except (ValueError, TypeError) as exc:
        raise InputError(str(exc)) from None
    report = run_study(cfg, workers=args.workers)
    _write_json(args.out, report.to_dict())
    csv_path = args.csv
    if csv_path is None and args.out not in (None, "-"):
        csv_path = str(Path(args.out).with_suffix(".csv"))
    if csv_path:
        report.write_csv(csv_path)
    return EXIT_OK


def cmd_efficiency(args) -> int:
    err = _distribution_from_args(args)
    if args.K < 1:
        raise InputError("--K must be at least 1")
    _write_json(args.out, efficiency_report(err, args.K).to_dict())
    return EXIT_OK


_FAMILIES = {
    "t": "student_t",
    "student_t": "student_t",
    "mixnormal": "normal_mixture",
    "normal_mixture": "normal_mixture",
    "double_gamma": "double_gamma_mixture",
    "double_gamma_mixture": "double_gamma_mixture",
}


def cmd_curve(args) -> int:
    if args.family == "ratio":
        err = _distribution_from_args(args)
        if not err.has_finite_variance:
            raise InputError(f"{err.kind} has infinite variance; the ratio is undefined")
        if not 1 <= args.K_min <= args.K_max:
            raise InputError("need 1 <= --K-min <= --K-max")
        table = ratio_curve(err, range(args.K_min, args.K_max + 1))
        _write_rows(args.out, ["K", "ratio"], [(int(k), r) for k, r in table])
        return EXIT_OK
    family = _FAMILIES[args.family]
    if args.values:
        grid = np.array(_parse_floats(args.values))
    elif args.start is not None or args.stop is not None:
        if args.start is None or args.stop is None or args.num < 1:
            raise InputError("--start and --stop go together, with --num >= 1")
        grid = np.linspace(args.start, args.stop, args.num)
    else:
        grid = DEFAULT_CURVE_GRIDS[family]
    try:
        table = delta_curve(family, grid, check=not args.no_check)
    except ValueError as exc:
        raise InputError(str(exc)) from None
    _write_rows(args.out, ["parameter", "delta"], table)
    return EXIT_OK


def _add_dist_flags(p: argparse.ArgumentParser, required: bool = True) -> None:
    p.add_argument("--dist", required=required, help="normal, double_exponential (laplace), logistic, t, cauchy, mixnormal, double_gamma")
    p.add_argument("--v", type=float, help="degrees of freedom for t")
    p.add_argument("--r", type=float, help="mixing weight for mixnormal")
    p.add_argument("--alpha", type=float, help="shape for double_gamma")
    p.add_argument("--var", type=float, help="variance for normal")
    p.add_argument("--scale", type=float, default=1.0)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cqrkit", description="Composite quantile regression toolkit.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("fit", help="fit a linear model to a CSV file")
    p.add_argument("data")
    p.add_argument("--method", choices=["ols", "qr", "cqr", "acqr"], default="cqr")
    p.add_argument("--response", default="y")
    p.add_argument("--tau", type=float, default=0.5, help="level for --method qr")
    p.add_argument("--K", type=int, default=19, help="number of equally spaced levels")
    p.add_argument("--levels", help="explicit comma-separated levels (overrides --K)")
    p.add_argument("--validation", help="validation CSV for --method acqr")
    p.add_argument("--lambdas", help="comma-separated penalty levels for acqr")
    p.add_argument("--n-lambdas", type=int, default=30, help="size of the default penalty grid")
    p.add_argument("--weight-exponent", type=float, default=2.0)
    p.add_argument("-o", "--out", default="-")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("simulate", help="run the Monte Carlo study")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--preset", choices=sorted(PRESET_ERRORS))
    src.add_argument("--config", help="JSON simulation config")
    p.add_argument("--reps", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--methods", help=f"comma-separated subset of {','.join(METHODS)}")
    p.add_argument("--workers", type=int, help="worker processes (default: CQRKIT_THREADS or all cores)")
    p.add_argument("-o", "--out", default="-")
    p.add_argument("--csv", help="per-replication CSV (default: OUT with a .csv suffix)")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("efficiency", help="relative efficiency report for an error law")
    _add_dist_flags(p)
    p.add_argument("--K", type=int, default=19)
    p.add_argument("-o", "--out", default="-")
    p.set_defaults(func=cmd_efficiency)

    p = sub.add_parser("curve", help="delta over a family parameter, or the finite-K ratio")
    p.add_argument("--family", required=True, choices=sorted(_FAMILIES) + ["ratio"])
    p.add_argument("--values", help="comma-separated parameter values")
    p.add_argument("--start", type=float)
    p.add_argument("--stop", type=float)
    p.add_argument("--num", type=int, default=50)
    p.add_argument("--no-check", action="store_true", help="skip the quadrature cross-check")
    _add_dist_flags(p, required=False)
    p.add_argument("--K-min", type=int, default=1)
    p.add_argument("--K-max", type=int, default=29)
    p.add_argument("-o", "--out", default="-")
    p.set_defaults(func=cmd_curve)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "curve" and args.family == "ratio" and not args.dist:
        parser.error("--family ratio needs --dist")
    try:
        return args.func(args)
    except InputError as exc:
        print(f"cqrkit: error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (EstimationError, ArithmeticError, np.linalg.LinAlgError) as exc:
        print(f"cqrkit: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())

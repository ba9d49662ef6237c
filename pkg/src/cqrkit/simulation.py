"""Monte Carlo comparison of least squares, CQR and adaptive CQR.

Each replication draws training and validation designs from ``N(0, sigma_x)``
with errors from the model's error law, fits every requested method and
records the model error ``(b - beta*)' sigma_x (b - beta*)`` together with
the selection counts. Replication ``r`` of a study with seed ``s`` draws
from its own stream ``spawn_rng(s, r)``, so results do not depend on how
replications are scheduled over worker processes.
"""

from __future__ import annotations

import csv
import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .distributions import ErrorDistribution
from .estimators import (
    Dataset,
    LinearModelSpec,
    QuantileGrid,
    fit_acqr,
    fit_cqr,
    fit_ols,
    fit_oracle,
)
from .numerics import sample_mvnormal, spawn_rng

METHODS = ("ls_oracle", "cqr_oracle", "acqr", "ols", "cqr")
TABLE_BETA = (3.0, 1.5, 0.0, 0.0, 2.0, 0.0, 0.0, 0.0)

PRESET_ERRORS = {
    "ex1": ErrorDistribution.normal(var=3.0),
    "ex2": ErrorDistribution.normal_mixture(0.5, scale=math.sqrt(6.0)),
    "ex3": ErrorDistribution.double_gamma_mixture(14.0, scale=1.0 / 9.0),
    "ex4": ErrorDistribution.student_t(3.0),
    "ex5": ErrorDistribution.cauchy(),
}

__all__ = [
    "METHODS",
    "PRESET_ERRORS",
    "SimulationConfig",
    "SimulationReport",
    "model_error",
    "preset",
    "run_replication",
    "run_study",
    "selection_counts",
    "worker_count",
]


def model_error(beta_hat, spec: LinearModelSpec) -> float:
    """``(beta_hat - beta*)' sigma_x (beta_hat - beta*)``."""
    d = np.asarray(beta_hat, dtype=float) - spec.beta_star
    if d.shape != spec.beta_star.shape:
        raise ValueError(f"beta_hat has {d.size} entries; the model has {spec.p}")
    return float(d @ spec.sigma_x @ d)


def selection_counts(selected: Sequence[int], spec: LinearModelSpec) -> tuple[int, int]:
    """(number of true predictors selected, number of noise predictors selected)."""
    sel = {int(j) for j in selected}
    if any(j < 0 or j >= spec.p for j in sel):
        raise ValueError(f"selected indices must lie in [0, {spec.p})")
    support = set(spec.support)
    return len(sel & support), len(sel - support)


@dataclass
class SimulationConfig:
    spec: LinearModelSpec
    n_train: int = 100
    n_validation: int = 100
    replications: int = 100
    grid: QuantileGrid = field(default_factory=QuantileGrid.equally_spaced)
    lambda_grid: np.ndarray | None = None
    methods: tuple = METHODS
    seed: int = 0

    def __post_init__(self):
        self.methods = tuple(self.methods)
        unknown = set(self.methods) - set(METHODS)
        if unknown:
            raise ValueError(f"unknown methods {sorted(unknown)}; expected a subset of {METHODS}")
        if not self.methods:
            raise ValueError("at least one method is required")
        if int(self.replications) < 1:
            raise ValueError("replications must be at least 1")
        if self.n_train <= self.spec.p:
            raise ValueError(f"n_train must exceed p={self.spec.p}")
        if "acqr" in self.methods and self.n_validation < 1:
            raise ValueError("acqr needs validation data")
        if self.lambda_grid is not None:
            self.lambda_grid = np.atleast_1d(np.asarray(self.lambda_grid, dtype=float))
        self.replications = int(self.replications)
        self.seed = int(self.seed)

    def to_dict(self) -> dict:
        return {
            "beta_star": self.spec.beta_star.tolist(),
            "sigma_x": self.spec.sigma_x.tolist(),
            "error": self.spec.error.to_dict(),
            "n_train": self.n_train,
            "n_validation": self.n_validation,
            "replications": self.replications,
            "levels": list(self.grid.levels),
            "lambda_grid": None if self.lambda_grid is None else self.lambda_grid.tolist(),
            "methods": list(self.methods),
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SimulationConfig":
        """Build from a JSON-style record.

        ``sigma_x`` may be omitted in favour of ``rho`` (default 0.5), and
        ``levels`` in favour of ``K`` (default 19).
        """
        try:
            beta = np.asarray(d["beta_star"], dtype=float)
            error = ErrorDistribution.from_dict(d["error"])
        except KeyError as exc:
            raise ValueError(f"config is missing {exc.args[0]!r}") from None
        if "sigma_x" in d:
            spec = LinearModelSpec(beta, np.asarray(d["sigma_x"], dtype=float), error)
        else:
            spec = LinearModelSpec.ar1(beta, error, float(d.get("rho", 0.5)))
        grid = QuantileGrid(tuple(d["levels"])) if d.get("levels") else QuantileGrid.equally_spaced(int(d.get("K", 19)))
        return cls(
            spec=spec,
            n_train=int(d.get("n_train", 100)),
            n_validation=int(d.get("n_validation", 100)),
            replications=int(d.get("replications", 100)),
            grid=grid,
            lambda_grid=d.get("lambda_grid"),
            methods=tuple(d.get("methods", METHODS)),
            seed=int(d.get("seed", 0)),
        )

    @classmethod
    def from_json(cls, path) -> "SimulationConfig":
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))


def preset(name: str, replications: int = 100, seed: int = 0, **overrides) -> SimulationConfig:
    """One of the five reference designs ``ex1`` .. ``ex5``.

    All share ``beta* = (3, 1.5, 0, 0, 2, 0, 0, 0)``, ``sigma_x[i, j] =
    0.5 ** |i - j|`` and 100 training plus 100 validation rows; they differ
    in the error law (see ``PRESET_ERRORS``).
    """
    if name not in PRESET_ERRORS:
        raise ValueError(f"unknown preset {name!r}; expected one of {sorted(PRESET_ERRORS)}")
    spec = LinearModelSpec.ar1(TABLE_BETA, PRESET_ERRORS[name], 0.5)
    return SimulationConfig(spec=spec, replications=replications, seed=seed, **overrides)


def _draw(config: SimulationConfig, rep: int):
    spec = config.spec
    rng = spawn_rng(config.seed, rep)
    mean = np.zeros(spec.p)
    X_tr = sample_mvnormal(rng, mean, spec.sigma_x, config.n_train)
    e_tr = spec.error.sample(rng, config.n_train)
    y_tr = X_tr @ spec.beta_star + e_tr
    if config.n_validation > 0:
        X_va = sample_mvnormal(rng, mean, spec.sigma_x, config.n_validation)
        y_va = X_va @ spec.beta_star + spec.error.sample(rng, config.n_validation)
    else:
        X_va = np.zeros((0, spec.p))
        y_va = np.zeros(0)
    return X_tr, y_tr, X_va, y_va


def run_replication(config: SimulationConfig, rep: int) -> dict:
    """Fit every configured method on replication ``rep``.

    Returns ``{"replication": rep, "methods": {name: record}}`` where a
    record holds ``me``, ``nc``, ``nic``, ``lambda`` and ``error`` (a message
    when the estimator failed, otherwise ``None``).
    """
    if not 0 <= rep < config.replications:
        raise ValueError(f"replication index {rep} outside [0, {config.replications})")
    spec = config.spec
    X_tr, y_tr, X_va, y_va = _draw(config, rep)
    train = Dataset(X_tr, y_tr)
    out = {}
    for name in config.methods:
        try:
            if name == "ls_oracle":
                fit = fit_oracle(train, spec.support, "ls")
            elif name == "cqr_oracle":
                fit = fit_oracle(train, spec.support, "cqr", config.grid)
            elif name == "ols":
                fit = fit_ols(train)
            elif name == "cqr":
                fit = fit_cqr(train, config.grid)
            else:
                fit = fit_acqr(train, Dataset(X_va, y_va), config.grid, config.lambda_grid)
        except (ArithmeticError, RuntimeError, ValueError, np.linalg.LinAlgError) as exc:
            out[name] = {"me": None, "nc": None, "nic": None, "lambda": None, "error": f"{type(exc).__name__}: {exc}"}
            continue
        nc, nic = selection_counts(fit.selected_support, spec)
        out[name] = {"me": model_error(fit.beta_hat, spec), "nc": nc, "nic": nic, "lambda": fit.lam, "error": None}
    return {"replication": rep, "methods": out}


def worker_count() -> int:
    """Worker processes for :func:`run_study`; ``CQRKIT_THREADS`` caps it."""
    default = os.cpu_count() or 1
    raw = os.environ.get("CQRKIT_THREADS")
    if raw:
        try:
            return max(1, min(int(raw), default))
        except ValueError:
            raise ValueError(f"CQRKIT_THREADS must be an integer, got {raw!r}") from None
    return default


@dataclass
class SimulationReport:
    config: SimulationConfig
    summary: dict
    records: list

    def to_dict(self) -> dict:
        return {"config": self.config.to_dict(), "summary": self.summary, "records": self.records}

    def write_json(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, indent=2)
            fh.write("\n")

    def write_csv(self, path) -> None:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["method", "replication", "me", "nc", "nic"])
            for rec in self.records:
                for name in self.config.methods:
                    r = rec["methods"][name]
                    w.writerow([name, rec["replication"], "" if r["me"] is None else repr(r["me"]), r["nc"], r["nic"]])


def _summarize(config: SimulationConfig, records: list) -> dict:
    summary = {}
    for name in config.methods:
        ok = [rec["methods"][name] for rec in records if rec["methods"][name]["error"] is None]
        n = len(ok)
        if n:
            me = [r["me"] for r in ok]
            entry = {
                "mean_me": math.fsum(me) / n,
                "median_me": float(np.median(me)),
                "mean_nc": math.fsum(r["nc"] for r in ok) / n,
                "mean_nic": math.fsum(r["nic"] for r in ok) / n,
            }
        else:
            entry = {"mean_me": None, "median_me": None, "mean_nc": None, "mean_nic": None}
        entry["replications"] = n
        entry["failures"] = len(records) - n
        summary[name] = entry
    return summary


def _run_one(args):
    config, rep = args
    return run_replication(config, rep)


def run_study(config: SimulationConfig, workers: int | None = None) -> SimulationReport:
    """Run all replications and aggregate them.

    Means use exactly rounded summation, so the summary does not depend
    on the order in which replications finish.
    """
    workers = worker_count() if workers is None else max(1, int(workers))
    reps = range(config.replications)
    if workers == 1 or config.replications == 1:
        records = [run_replication(config, r) for r in reps]
    else:
        with ProcessPoolExecutor(max_workers=min(workers, config.replications)) as pool:
            records = list(pool.map(_run_one, [(config, r) for r in reps], chunksize=4))
    return SimulationReport(config, _summarize(config, records), records)

"""Desk-scale experiment harness.

Replays the estimators over many subsample draws to measure empirical
mean squared error against the generating parameter, the efficiency of
each estimator relative to the weighted baseline, and the calibration
of the variance estimates.  Also times the pipelines end to end on
synthetic data of growing size.

Within one replication every estimator shares the same pilot, and the
weighted and unweighted with-replacement fits consume the identical
index draw, so comparisons isolate the estimators rather than the
sampling noise.  Per-replication seeds are derived deterministically
from (seed, replication), so aggregates do not depend on execution
order and replications could run concurrently.

This module only builds tables; figure rendering lives in
:mod:`oslogit.plots` and is driven by the command line.
"""

from __future__ import annotations

import tempfile
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
import pandas as pd

from . import rng as rng_mod
from .designs import GENERATOR_KINDS, CovariateGenerator, generate
from .errors import ConfigError, EstimationError
from .estimators import (
    attach_variance,
    combine,
    fit_poisson,
    fit_unweighted_replacement,
    fit_weighted_combined,
    full_data_mle,
    pilot_fit,
)
from .ingest import DEFAULT_BLOCK_SIZE, open_csv, write_csv

ESTIMATOR_NAMES = ("weighted", "replacement", "poisson")
CALIBRATION_BAND = (0.7, 1.3)


@dataclass
class ExperimentPlan:
    """Configuration of one Monte Carlo experiment."""

    generator: str
    N: int
    d: int
    beta_t: np.ndarray
    n1: int = 200
    n_grid: tuple[int, ...] = (1000,)
    S: int = 500
    estimators: tuple[str, ...] = ESTIMATOR_NAMES
    h: tuple[str, ...] = ("mmse",)
    conditional: bool = True
    c0: float = 1.0
    c1: float = 1.0
    pilot_mode: str = "replacement"
    variance: str = "full"

    def __post_init__(self):
        self.beta_t = np.asarray(self.beta_t, dtype=float)
        if self.beta_t.ndim == 0:
            self.beta_t = np.full(self.d, float(self.beta_t))
        self.n_grid = tuple(int(n) for n in self.n_grid)
        self.estimators = tuple(self.estimators)
        self.h = tuple(self.h)
        self.validate()

    def validate(self) -> None:
        if self.generator not in GENERATOR_KINDS:
            raise ConfigError(f"unknown generator {self.generator!r}")
        if self.beta_t.shape != (self.d,):
            raise ConfigError("beta_t length must equal d")
        if self.n1 <= 0 or self.S <= 0:
            raise ConfigError("n1 and S must be positive")
        if not self.n_grid or min(self.n_grid) <= 0:
            raise ConfigError("n_grid must hold positive sizes")
        if self.n1 + max(self.n_grid) >= self.N:
            raise ConfigError("pilot plus stage budget must stay below N")
        unknown = set(self.estimators) - set(ESTIMATOR_NAMES)
        if unknown:
            raise ConfigError(f"unknown estimators: {sorted(unknown)}")
        if self.variance not in ("full", "simplified"):
            raise ConfigError("variance must be 'full' or 'simplified'")
        if self.pilot_mode not in ("replacement", "poisson"):
            raise ConfigError("pilot_mode must be 'replacement' or 'poisson'")

    @staticmethod
    def from_dict(raw: dict) -> "ExperimentPlan":
        known = {f for f in ExperimentPlan.__dataclass_fields__}
        extra = set(raw) - known
        if extra:
            raise ConfigError(f"unknown plan keys: {sorted(extra)}")
        missing = {"generator", "N", "d", "beta_t"} - set(raw)
        if missing:
            raise ConfigError(f"plan is missing keys: {sorted(missing)}")
        return ExperimentPlan(**raw)

    def to_dict(self) -> dict:
        return {
            "generator": self.generator,
            "N": self.N,
            "d": self.d,
            "beta_t": [float(v) for v in self.beta_t],
            "n1": self.n1,
            "n_grid": list(self.n_grid),
            "S": self.S,
            "estimators": list(self.estimators),
            "h": list(self.h),
            "conditional": self.conditional,
            "c0": self.c0,
            "c1": self.c1,
            "pilot_mode": self.pilot_mode,
            "variance": self.variance,
        }


@dataclass
class ResultRow:
    """Aggregated outcome for one (estimator, h, n) cell."""

    estimator: str
    h: str
    n: int
    mse: float
    mean_tr_v: float | None
    rel_eff: float | None
    failures: int
    replications: int
    runtime_s: float


@dataclass
class ExperimentResult:
    plan: ExperimentPlan
    seed: int
    rows: list[ResultRow] = field(default_factory=list)

    def row(self, estimator: str, h: str, n: int) -> ResultRow:
        for r in self.rows:
            if (r.estimator, r.h, r.n) == (estimator, h, n):
                return r
        raise KeyError((estimator, h, n))

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(
            {
                "estimator": [r.estimator for r in self.rows],
                "h": [r.h for r in self.rows],
                "n": [r.n for r in self.rows],
                "mse": [r.mse for r in self.rows],
                "mean_tr_v": [r.mean_tr_v for r in self.rows],
                "rel_eff": [r.rel_eff for r in self.rows],
                "failures": [r.failures for r in self.rows],
                "replications": [r.replications for r in self.rows],
            }
        )

    def to_long_frame(self) -> pd.DataFrame:
        """Long format: one (estimator, h, n, metric, value) row per cell.

        Wall-clock runtimes are not emitted; outputs stay reproducible.
        """
        records = []
        for r in self.rows:
            metrics = {
                "mse": r.mse,
                "mean_tr_v": r.mean_tr_v,
                "rel_eff": r.rel_eff,
                "failures": float(r.failures),
                "replications": float(r.replications),
            }
            for metric, value in metrics.items():
                if value is None:
                    continue
                records.append(
                    {"estimator": r.estimator, "h": r.h, "n": r.n,
                     "metric": metric, "value": value}
                )
        return pd.DataFrame.from_records(records)

    def to_dict(self) -> dict:
        return {
            "plan": self.plan.to_dict(),
            "seed": self.seed,
            "cells": [
                {
                    "estimator": r.estimator,
                    "h": r.h,
                    "n": r.n,
                    "mse": r.mse,
                    "mean_tr_v": r.mean_tr_v,
                    "rel_eff": r.rel_eff,
                    "failures": r.failures,
                    "replications": r.replications,
                }
                for r in self.rows
            ],
        }


class _Cell:
    __slots__ = ("sq_errors", "tr_vs", "failures", "runtime")

    def __init__(self):
        self.sq_errors: list[float] = []
        self.tr_vs: list[float] = []
        self.failures = 0
        self.runtime = 0.0


def run_experiment(plan: ExperimentPlan, seed: int = rng_mod.DEFAULT_SEED) -> ExperimentResult:
    """Run the full replication loop of a plan.

    Conditional plans fix one synthetic dataset and vary only the
    subsample draws; unconditional plans redraw the dataset each
    replication.  Mean squared errors are always measured against the
    generating parameter.

    A cell whose failure count exceeds 2% of S aborts the run; rare
    separation on tiny subsamples is tolerated and excluded from the
    averages.
    """
    gen = CovariateGenerator(plan.generator, plan.d)
    cells: dict[tuple[str, str, int], _Cell] = {
        (est, h, n): _Cell()
        for est in plan.estimators for h in plan.h for n in plan.n_grid
    }

    fixed_data = None
    if plan.conditional:
        fixed_data = generate(gen, plan.N, plan.beta_t, rng_mod.derive_int(seed, rng_mod.STREAM_DATA))

    for s in range(plan.S):
        if plan.conditional:
            data = fixed_data
        else:
            data = generate(gen, plan.N, plan.beta_t,
                            rng_mod.derive_int(seed, rng_mod.STREAM_DATA, s))
        rep_seed = rng_mod.derive_int(seed, s)
        for h_name in plan.h:
            try:
                pilot = pilot_fit(data, plan.n1, plan.c0, plan.c1,
                                  mode=plan.pilot_mode, h=h_name, seed=rep_seed)
            except EstimationError:
                for est in plan.estimators:
                    for n in plan.n_grid:
                        cells[(est, h_name, n)].failures += 1
                continue
            for i, n in enumerate(plan.n_grid):
                stage_seed = rng_mod.derive_int(rep_seed, i)
                for est in plan.estimators:
                    cell = cells[(est, h_name, n)]
                    t0 = time.perf_counter()
                    try:
                        if est == "weighted":
                            beta = fit_weighted_combined(data, pilot, n, stage_seed).beta
                            tr_v = None
                        elif est == "replacement":
                            stage = fit_unweighted_replacement(data, pilot, n, stage_seed)
                            combined = attach_variance(pilot, stage, combine(pilot, stage),
                                                       plan.variance)
                            beta = combined.beta_check
                            tr_v = float(np.trace(combined.vcov))
                        else:
                            stage = fit_poisson(data, pilot, n, stage_seed)
                            combined = attach_variance(pilot, stage, combine(pilot, stage),
                                                       plan.variance)
                            beta = combined.beta_check
                            tr_v = float(np.trace(combined.vcov))
                    except EstimationError:
                        cell.failures += 1
                        cell.runtime += time.perf_counter() - t0
                        continue
                    cell.runtime += time.perf_counter() - t0
                    cell.sq_errors.append(float(np.sum((beta - plan.beta_t) ** 2)))
                    if tr_v is not None:
                        cell.tr_vs.append(tr_v)

    limit = 0.02 * plan.S
    for key, cell in cells.items():
        if cell.failures > limit:
            raise EstimationError(
                f"{cell.failures} of {plan.S} replications failed for {key}"
            )

    result = ExperimentResult(plan=plan, seed=seed)
    for h_name in plan.h:
        for n in plan.n_grid:
            weighted_mse = None
            if "weighted" in plan.estimators:
                weighted_mse = float(np.mean(cells[("weighted", h_name, n)].sq_errors))
            for est in plan.estimators:
                cell = cells[(est, h_name, n)]
                mse = float(np.mean(cell.sq_errors))
                rel = None
                if weighted_mse is not None:
                    rel = weighted_mse / mse
                result.rows.append(ResultRow(
                    estimator=est,
                    h=h_name,
                    n=n,
                    mse=mse,
                    mean_tr_v=float(np.mean(cell.tr_vs)) if cell.tr_vs else None,
                    rel_eff=rel,
                    failures=cell.failures,
                    replications=len(cell.sq_errors),
                    runtime_s=cell.runtime,
                ))
    return result


def calibration_table(result: ExperimentResult) -> pd.DataFrame:
    """Side-by-side empirical MSE and average estimated variance trace.

    The ratio column should hover near one when the variance estimator
    is honest; rows outside the [0.7, 1.3] band are flagged.
    """
    records = []
    lo, hi = CALIBRATION_BAND
    for r in result.rows:
        if r.mean_tr_v is None:
            continue
        ratio = r.mean_tr_v / r.mse
        records.append({
            "estimator": r.estimator,
            "h": r.h,
            "n": r.n,
            "empirical_mse": r.mse,
            "mean_tr_v": r.mean_tr_v,
            "ratio": ratio,
            "flagged": not (lo <= ratio <= hi),
        })
    return pd.DataFrame.from_records(records)


@dataclass
class BenchRow:
    method: str
    N: int
    backing: str
    seconds: float
    passes: int
    rows_read: int


def timing_benchmark(N_grid: Sequence[int], d: int, n1: int, n: int,
                     backing: str = "file", h: str = "mvc",
                     block_size: int = DEFAULT_BLOCK_SIZE,
                     seed: int = rng_mod.DEFAULT_SEED,
                     workdir: str | None = None) -> pd.DataFrame:
    """Wall-clock the three pipelines and the full MLE at growing N.

    Synthetic balanced-normal data is generated per N (generation and
    file writing excluded from the timings).  Pass and row counts are
    measured per method on a fresh source, so they are exact.
    """
    if backing not in ("file", "memory"):
        raise ConfigError("backing must be 'file' or 'memory'")
    rows: list[BenchRow] = []
    tmp = None
    if backing == "file" and workdir is None:
        tmp = tempfile.TemporaryDirectory(prefix="oslogit-bench-")
        workdir = tmp.name
    try:
        for N in N_grid:
            gen = CovariateGenerator("mzNormal", d)
            beta_t = np.full(d, 0.5)
            mem = generate(gen, int(N), beta_t, rng_mod.derive_int(seed, rng_mod.STREAM_DATA, int(N)),
                           block_size=block_size)
            path = None
            if backing == "file":
                X, y = mem.arrays
                path = str(Path(workdir) / f"bench-{N}.csv")
                write_csv(X, y, path)

            def fresh():
                if backing == "file":
                    return open_csv(path, block_size=block_size, n_rows=int(N))
                return generate(gen, int(N), beta_t,
                                rng_mod.derive_int(seed, rng_mod.STREAM_DATA, int(N)),
                                block_size=block_size)

            def timed(method, fn):
                src = fresh()
                before = src.reads.snapshot()
                t0 = time.perf_counter()
                fn(src)
                dt = time.perf_counter() - t0
                rows.append(BenchRow(
                    method=method, N=int(N), backing=backing, seconds=dt,
                    passes=src.reads.passes - before.passes,
                    rows_read=src.reads.rows - before.rows,
                ))

            rep_seed = rng_mod.derive_int(seed, int(N))

            def run_weighted(src):
                pilot = pilot_fit(src, n1, h=h, seed=rep_seed)
                fit_weighted_combined(src, pilot, n, rep_seed)

            def run_replacement(src):
                pilot = pilot_fit(src, n1, h=h, seed=rep_seed)
                stage = fit_unweighted_replacement(src, pilot, n, rep_seed)
                combine(pilot, stage)

            def run_poisson(src):
                pilot = pilot_fit(src, n1, mode="poisson", h=h, seed=rep_seed)
                stage = fit_poisson(src, pilot, n, rep_seed)
                combine(pilot, stage)

            timed("poisson", run_poisson)
            timed("replacement", run_replacement)
            timed("weighted", run_weighted)
            timed("full", lambda src: full_data_mle(src))
    finally:
        if tmp is not None:
            tmp.cleanup()
    return pd.DataFrame([r.__dict__ for r in rows])

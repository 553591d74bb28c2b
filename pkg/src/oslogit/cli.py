"""Command-line interface.

Subcommands:

    subsample           draw one subsample and write its rows as CSV
    estimate            run a full pipeline and write the estimate as JSON
    simulate            run an experiment plan; write tables and figures
    verify-asymptotics  Monte Carlo check of the variance orderings
    bench               wall-clock the pipelines against the full MLE

Exit codes: 0 success, 2 input or configuration error, 3 estimation
failure, 4 verification failure.  All randomness is controlled by
--seed (fixed default); --entropy opts into OS randomness.  Output
files are a pure function of inputs and seed; wall-clock measurements
go to the log or, for bench, to clearly volatile columns.
"""

from __future__ import annotations

import argparse
import json
import logging
import secrets
import sys
import time
from pathlib import Path

import numpy as np
import pandas as pd

from . import rng as rng_mod
from .asymptotics import verify_propositions
from .designs import GENERATOR_KINDS, make_generator
from .errors import (
    ConfigError,
    DataError,
    EstimationError,
    OslogitError,
    VerificationError,
)
from .estimators import (
    attach_variance,
    combine,
    fit_poisson,
    fit_unweighted_replacement,
    fit_weighted_combined,
    pilot_fit,
    stage_probabilities,
)
from .ingest import DEFAULT_BLOCK_SIZE, Schema, open_csv
from .sampler import draw_indexes_with_replacement, gather_sorted, pilot_rates_from_prior, poisson_scan
from .sim import ExperimentPlan, calibration_table, run_experiment, timing_benchmark

log = logging.getLogger("oslogit")

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_ESTIMATION = 3
EXIT_VERIFICATION = 4


def _parse_int_list(text: str, flag: str) -> list[int]:
    try:
        return [int(tok) for tok in text.split(",") if tok.strip() != ""]
    except ValueError as exc:
        raise ConfigError(f"{flag} expects a comma-separated integer list") from exc


def _parse_float_list(text: str, flag: str) -> list[float]:
    try:
        return [float(tok) for tok in text.split(",") if tok.strip() != ""]
    except ValueError as exc:
        raise ConfigError(f"{flag} expects a comma-separated number list") from exc


def _add_data_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--data", required=True, help="path to a delimited text file")
    p.add_argument("--label-col", type=int, default=0, help="label column index (default 0)")
    p.add_argument("--covariate-cols", default=None,
                   help="comma-separated covariate column indexes (default: all others)")
    p.add_argument("--intercept", action="store_true",
                   help="prepend a constant-one covariate")
    p.add_argument("--delimiter", default=",", help="field delimiter (default ',')")
    p.add_argument("--header", action="store_true", help="first line is a header")
    p.add_argument("--n-rows", type=int, default=None,
                   help="row count, if known; skips the counting pass")
    p.add_argument("--block-size", type=int, default=DEFAULT_BLOCK_SIZE,
                   help="rows per streamed block (default 1000)")


def _add_seed_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--seed", type=int, default=rng_mod.DEFAULT_SEED,
                   help=f"random seed (default {rng_mod.DEFAULT_SEED})")
    p.add_argument("--entropy", action="store_true",
                   help="draw the seed from OS randomness instead of --seed")


def _add_pilot_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--n1", type=int, default=200, help="pilot budget (default 200)")
    p.add_argument("--c0", type=float, default=1.0,
                   help="case-control rate for label 0 (default 1)")
    p.add_argument("--c1", type=float, default=1.0,
                   help="case-control rate for label 1 (default 1)")
    p.add_argument("--p-pr", type=float, default=None,
                   help="prior share of label 1; sets c0, c1 to balance the pilot")


def _resolve_seed(args) -> int:
    if args.entropy:
        seed = secrets.randbits(63)
        log.info("entropy seed: %d", seed)
        return seed
    return args.seed


def _resolve_rates(args) -> tuple[float, float]:
    if args.p_pr is not None:
        c0, c1 = pilot_rates_from_prior(args.p_pr)
        log.info("pilot rates from prior %.3f: c0=%.6g c1=%.6g", args.p_pr, c0, c1)
        return c0, c1
    return args.c0, args.c1


def _open_source(args):
    cols = None
    if args.covariate_cols is not None:
        cols = _parse_int_list(args.covariate_cols, "--covariate-cols")
    schema = Schema(
        label_column=args.label_col,
        covariate_columns=cols,
        add_intercept=args.intercept,
        delimiter=args.delimiter,
        has_header=args.header,
    )
    return open_csv(args.data, schema, block_size=args.block_size, n_rows=args.n_rows)


def _write_json(obj, path: str) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def cmd_subsample(args) -> int:
    seed = _resolve_seed(args)
    c0, c1 = _resolve_rates(args)
    source = _open_source(args)
    mode = "poisson" if args.method == "poisson" else "replacement"
    pilot = pilot_fit(source, args.n1, c0, c1, mode=mode, h=args.h, seed=seed)
    if args.method == "replacement":
        probs = stage_probabilities(source, pilot)
        idx = draw_indexes_with_replacement(probs, args.n, seed)
        sub = gather_sorted(source, idx, probs)
    else:
        sub = poisson_scan(source, pilot.beta1, pilot.psi_hat1, pilot.choice,
                           args.n, seed)
    frame = pd.DataFrame(np.column_stack([sub.origin_indexes, sub.probs, sub.weights, sub.y, sub.X]))
    frame.columns = (["origin_index", "prob", "weight", "y"]
                     + [f"x{j}" for j in range(sub.X.shape[1])])
    frame["origin_index"] = frame["origin_index"].astype(np.int64)
    frame["y"] = frame["y"].astype(np.int64)
    Path(args.out).parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(args.out, index=False)
    log.info("wrote %d rows (nominal %d) to %s", sub.realized_size, sub.nominal_size, args.out)
    return EXIT_OK


def cmd_estimate(args) -> int:
    seed = _resolve_seed(args)
    c0, c1 = _resolve_rates(args)
    source = _open_source(args)
    t0 = time.perf_counter()
    mode = "poisson" if args.method == "poisson" else "replacement"
    pilot = pilot_fit(source, args.n1, c0, c1, mode=mode, h=args.h, seed=seed)

    vcov = None
    variance_kind = None
    if args.method == "weighted":
        est = fit_weighted_combined(source, pilot, args.n, seed)
        beta = est.beta
        stage_realized = est.subsample.realized_size - pilot.pilot.realized_size
        stage_iterations = est.report.iterations
        stage_converged = est.report.converged
    else:
        if args.method == "replacement":
            stage = fit_unweighted_replacement(source, pilot, args.n, seed)
        else:
            stage = fit_poisson(source, pilot, args.n, seed)
        combined = attach_variance(pilot, stage, combine(pilot, stage), args.variance)
        beta = combined.beta_check
        vcov = combined.vcov.tolist()
        variance_kind = combined.vcov_kind
        stage_realized = stage.subsample.realized_size
        stage_iterations = stage.report.iterations
        stage_converged = stage.report.converged
    elapsed = time.perf_counter() - t0

    payload = {
        "method": args.method,
        "h": args.h,
        "n": args.n,
        "n1": args.n1,
        "seed": seed,
        "beta_check": [float(v) for v in beta],
        "vcov": vcov,
        "variance": variance_kind,
        "diagnostics": {
            "n_rows": source.n_rows,
            "dim": source.dim,
            "pilot_realized": pilot.pilot.realized_size,
            "stage_realized": int(stage_realized),
            "passes": source.reads.passes,
            "rows_read": source.reads.rows,
            "pilot_iterations": pilot.report.iterations,
            "pilot_converged": pilot.report.converged,
            "stage_iterations": int(stage_iterations),
            "stage_converged": bool(stage_converged),
            "psi_hat1": pilot.psi_hat1,
            "beta1": [float(v) for v in pilot.beta1],
            "c0": c0,
            "c1": c1,
        },
    }
    _write_json(payload, args.out)
    log.info("estimate written to %s in %.3fs", args.out, elapsed)
    return EXIT_OK


def cmd_simulate(args) -> int:
    seed = _resolve_seed(args)
    with open(args.plan, "r", encoding="utf-8") as fh:
        try:
            raw = json.load(fh)
        except json.JSONDecodeError as exc:
            raise DataError(f"plan file is not valid JSON: {exc}") from exc
    plan = ExperimentPlan.from_dict(raw)
    t0 = time.perf_counter()
    result = run_experiment(plan, seed)
    elapsed = time.perf_counter() - t0

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    result.to_long_frame().to_csv(out / "results.csv", index=False)
    _write_json(result.to_dict(), str(out / "results.json"))
    calib = calibration_table(result)
    written = ["results.csv", "results.json"]
    if not calib.empty:
        calib.to_csv(out / "calibration.csv", index=False)
        written.append("calibration.csv")

    if not args.no_figures:
        from .plots import calibration_figure, relative_efficiency_figure

        wide = result.to_frame()
        if wide["rel_eff"].notna().any():
            relative_efficiency_figure(wide[wide["rel_eff"].notna()],
                                       str(out / "relative_efficiency.png"))
            written.append("relative_efficiency.png")
        if not calib.empty:
            calibration_figure(calib, str(out / "calibration.png"))
            written.append("calibration.png")

    for r in result.rows:
        log.info("%-12s h=%-5s n=%-6d mse=%.6g rel_eff=%s failures=%d",
                 r.estimator, r.h, r.n, r.mse,
                 f"{r.rel_eff:.3f}" if r.rel_eff is not None else "-", r.failures)
    log.info("simulate finished in %.1fs; wrote %s to %s", elapsed, ", ".join(written), out)
    return EXIT_OK


def cmd_verify(args) -> int:
    seed = _resolve_seed(args)
    beta = _parse_float_list(args.beta_t, "--beta-t")
    if len(beta) == 1:
        beta = beta * args.d
    if len(beta) != args.d:
        raise ConfigError("--beta-t must supply one value or exactly d values")
    gen = make_generator(args.generator, args.d)
    hs = [tok.strip() for tok in args.h.split(",") if tok.strip()]
    rhos = _parse_float_list(args.rho, "--rho")

    configs = []
    all_ok = True
    for h in hs:
        for rho in rhos:
            report = verify_propositions(gen, np.asarray(beta), h, rho, args.mc, seed)
            ok = report.all_ok
            all_ok = all_ok and ok
            est = report.estimates
            configs.append({
                "h": h,
                "rho": rho,
                "ok": ok,
                "efficiency_ok": report.efficiency_ok,
                "efficiency_equality": report.efficiency_equality,
                "poisson_conditional_ok": report.poisson_conditional_ok,
                "poisson_strict": report.poisson_strict,
                "poisson_unconditional_ok": report.poisson_unconditional_ok,
                "tolerance": report.tol,
                "details": report.details,
                "matrices": {
                    "sigma": est.sigma.tolist(),
                    "v_os": est.v_os.tolist(),
                    "lambda_rho": est.lambda_rho.tolist(),
                    "lambda_u": est.lambda_u.tolist(),
                    "phi_bar": est.phi_bar,
                },
            })
            log.info("h=%-5s rho=%-5g ok=%s", h, rho, ok)

    payload = {
        "generator": args.generator,
        "d": args.d,
        "beta_t": beta,
        "mc": args.mc,
        "seed": seed,
        "all_ok": all_ok,
        "configs": configs,
    }
    if args.out:
        _write_json(payload, args.out)
    else:
        json.dump(payload, sys.stdout, indent=2, sort_keys=True)
        sys.stdout.write("\n")
    if not all_ok:
        raise VerificationError("at least one matrix ordering failed")
    return EXIT_OK


def cmd_bench(args) -> int:
    seed = _resolve_seed(args)
    n_grid = _parse_int_list(args.n_grid, "--n-grid")
    frame = timing_benchmark(
        n_grid, args.d, args.n1, args.n,
        backing=args.backing, h=args.h, block_size=args.block_size, seed=seed,
    )
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    frame.to_csv(out / "bench.csv", index=False)
    if not args.no_figures:
        from .plots import timing_figure

        timing_figure(frame, str(out / "bench.png"))
    for _, row in frame.iterrows():
        log.info("%-12s N=%-9d %.3fs passes=%d rows=%d",
                 row["method"], row["N"], row["seconds"], row["passes"], row["rows_read"])
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="oslogit",
        description="Optimal subsampling estimators for logistic regression on large delimited datasets.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("subsample", help="draw a subsample and write its rows as CSV")
    _add_data_args(p)
    _add_pilot_args(p)
    _add_seed_args(p)
    p.add_argument("--method", choices=["replacement", "poisson"], default="replacement")
    p.add_argument("--h", choices=["unit", "mvc", "mmse"], default="mvc")
    p.add_argument("--n", type=int, required=True, help="stage subsample budget")
    p.add_argument("--out", required=True, help="output CSV path")
    p.set_defaults(func=cmd_subsample)

    p = sub.add_parser("estimate", help="run a pipeline end to end; write JSON")
    _add_data_args(p)
    _add_pilot_args(p)
    _add_seed_args(p)
    p.add_argument("--method", choices=["weighted", "replacement", "poisson"],
                   default="replacement")
    p.add_argument("--h", choices=["unit", "mvc", "mmse"], default="mvc")
    p.add_argument("--n", type=int, required=True, help="stage subsample budget")
    p.add_argument("--variance", choices=["full", "simplified"], default="full")
    p.add_argument("--out", required=True, help="output JSON path")
    p.set_defaults(func=cmd_estimate)

    p = sub.add_parser("simulate", help="run an experiment plan; write tables and figures")
    _add_seed_args(p)
    p.add_argument("--plan", required=True, help="experiment plan JSON file")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--no-figures", action="store_true", help="skip PNG rendering")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("verify-asymptotics",
                       help="Monte Carlo check of the variance matrix orderings")
    _add_seed_args(p)
    p.add_argument("--generator", choices=list(GENERATOR_KINDS), required=True)
    p.add_argument("--d", type=int, required=True)
    p.add_argument("--beta-t", required=True,
                   help="true parameter: one value (replicated) or d comma-separated values")
    p.add_argument("--h", default="unit", help="comma-separated scale names (unit, mvc, mmse)")
    p.add_argument("--rho", default="0.1", help="comma-separated sampling rates n / N")
    p.add_argument("--mc", type=int, default=100_000, help="Monte Carlo draws (default 1e5)")
    p.add_argument("--out", default=None, help="output JSON path (default: stdout)")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("bench", help="wall-clock the pipelines and the full MLE")
    _add_seed_args(p)
    p.add_argument("--n-grid", required=True, help="comma-separated dataset sizes N")
    p.add_argument("--d", type=int, default=7)
    p.add_argument("--n1", type=int, default=200)
    p.add_argument("--n", type=int, default=1000)
    p.add_argument("--h", choices=["unit", "mvc", "mmse"], default="mvc")
    p.add_argument("--backing", choices=["file", "memory"], default="file")
    p.add_argument("--block-size", type=int, default=DEFAULT_BLOCK_SIZE)
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--no-figures", action="store_true", help="skip PNG rendering")
    p.set_defaults(func=cmd_bench)

    return parser


def main(argv=None) -> int:
    logging.basicConfig(stream=sys.stderr, level=logging.INFO,
                        format="%(levelname)s %(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except VerificationError as exc:
        log.error("verification failed: %s", exc)
        return EXIT_VERIFICATION
    except EstimationError as exc:
        log.error("estimation failed: %s", exc)
        return EXIT_ESTIMATION
    except (DataError, ConfigError) as exc:
        log.error("input error: %s", exc)
        return EXIT_INPUT
    except FileNotFoundError as exc:
        log.error("input error: %s", exc)
        return EXIT_INPUT
    except OslogitError as exc:
        log.error("%s", exc)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())

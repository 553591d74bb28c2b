"""Two-step subsample estimators for logistic regression.

The pipeline shape is shared by every method:

1. a small pilot subsample yields a consistent first-step estimate
   (bias-corrected when the pilot is case-control),
2. the pilot estimate scores every row, a stage subsample is drawn from
   those scores, and the stage fit produces a second estimate,
3. the two estimates are merged by a precision-weighted average.

The stage fits for with-replacement and Poisson subsamples maximize a
plain (respectively weight-capped) likelihood rather than an
inverse-probability-weighted one; the sampling tilt is undone by adding
the pilot estimate to the stage maximizer.  This is what makes them
more efficient than the classical weighted estimator, which is kept
here as the comparison baseline.

All Hessians live in their positive semi-definite orientation
sum_i w_i phi_i x_i x_i', evaluated at the uncorrected stage maximizers,
matching the limits that appear in the asymptotic variances.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, EstimationError
from .ingest import DataSource
from .logistic import FitReport, newton_maximize, sigmoid
from .probabilities import (
    H_ALIASES,
    HChoice,
    KIND_MNORM,
    ProbabilityVector,
    compute_m_matrix,
    compute_pi_os,
    raw_score,
)
from .sampler import (
    Subsample,
    draw_indexes_with_replacement,
    draw_pilot_indexes,
    gather_sorted,
    poisson_scan,
)


@dataclass
class PilotEstimate:
    """First-step estimate plus everything later steps reuse.

    ``beta1`` is the bias-corrected pilot estimate: the raw maximizer
    ``beta_tilde1`` shifted by ``offset_b``, whose first coordinate is
    log(c0 / c1) (zero for a uniform pilot).  ``psi_hat1`` estimates
    the population normalizer E |y - p| h(x) from the pilot rows.
    ``hessian1`` and ``score_outer1`` are evaluated at the uncorrected
    maximizer, ready for combination and variance estimation.
    """

    beta_tilde1: np.ndarray
    beta1: np.ndarray
    offset_b: np.ndarray
    psi_hat1: float
    hessian1: np.ndarray
    score_outer1: np.ndarray
    choice: HChoice
    pilot: Subsample
    mode: str
    c0: float
    c1: float
    report: FitReport


@dataclass
class StageEstimate:
    """Second-step fit on a stage subsample.

    ``beta_hat = beta_tilde + beta1`` always holds exactly; both are
    kept because combination and variance formulas evaluate at the
    uncorrected ``beta_tilde``.
    """

    beta_tilde: np.ndarray
    beta_hat: np.ndarray
    hessian: np.ndarray
    score_outer: np.ndarray
    subsample: Subsample
    report: FitReport
    kind: str


@dataclass
class WeightedEstimate:
    """Classical inverse-probability-weighted estimate (the baseline)."""

    beta: np.ndarray
    report: FitReport
    subsample: Subsample
    pooled: bool


@dataclass
class CombinedEstimate:
    """Precision-weighted merge of pilot and stage estimates."""

    beta_check: np.ndarray
    vcov: np.ndarray | None = None
    vcov_kind: str | None = None


def resolve_h(name: str, pilot_rows: Subsample | None = None,
              beta1: np.ndarray | None = None) -> HChoice:
    """Map a user-facing scale name to a resolved :class:`HChoice`.

    The ``mmse`` scale needs a moment matrix; it is estimated from the
    pilot rows at the corrected pilot estimate.
    """
    kind = H_ALIASES.get(name)
    if kind is None:
        raise ConfigError(f"unknown h choice {name!r}; use unit, mvc, or mmse")
    if kind != KIND_MNORM:
        return HChoice(kind)
    if pilot_rows is None or beta1 is None:
        raise ConfigError("mmse requires pilot rows to estimate the moment matrix")
    m = compute_m_matrix(pilot_rows.X, pilot_rows.weights, beta1)
    return HChoice.mnorm(m)


def _cross_moments(X: np.ndarray, y: np.ndarray, w: np.ndarray,
                   beta: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """(sum w phi x x', sum w^2 (y - p)^2 x x') at ``beta``."""
    p = sigmoid(X @ beta)
    phi = p * (1.0 - p)
    resid = y - p
    H = (X * (w * phi)[:, None]).T @ X
    S = (X * ((w * resid) ** 2)[:, None]).T @ X
    return (H + H.T) / 2.0, (S + S.T) / 2.0


def pilot_fit(data: DataSource, n1: int, c0: float = 1.0, c1: float = 1.0,
              mode: str = "replacement", h: str = "mvc", seed: int = 0,
              block_size: int | None = None) -> PilotEstimate:
    """Draw the pilot subsample and produce the first-step estimate.

    Parameters
    ----------
    data : DataSource
        Full dataset, any backing.
    n1 : int
        Pilot budget (expected size under Poisson mode).
    c0, c1 : float
        Case-control rates; equal values give a uniform pilot and a
        zero bias correction.  With unequal values the correction
        log(c0 / c1) lands on coordinate 0, which is only meaningful
        when that coordinate is an intercept.
    mode : {"replacement", "poisson"}
        Pilot sampling scheme.
    h : {"unit", "mvc", "mmse"}
        Scale function the downstream stage will use; resolved here
        because the normalizer estimate and the mmse moment matrix both
        come from the pilot rows.
    """
    sub = draw_pilot_indexes(data, c0, c1, n1, seed, mode=mode, block_size=block_size)
    # Poisson pilots cap weights at max(n1 * rate, 1); with-replacement
    # pilots are fitted unweighted.  In the usual regime n1 * rate << 1
    # the two coincide at weight one.
    w = sub.weights if mode == "poisson" else np.ones(sub.realized_size)
    report = newton_maximize(sub.X, sub.y, w=w)
    beta_tilde1 = report.beta
    offset = np.zeros(data.dim)
    offset[0] = math.log(c0 / c1)
    beta1 = beta_tilde1 + offset

    choice = resolve_h(h, sub, beta1)
    # Normalizer estimate: inverse-rate average of |y - p(beta1)| h(x)
    # over the pilot rows, rates capped at one.
    capped = np.minimum(n1 * sub.probs, 1.0)
    scores = raw_score(sub.X, sub.y, beta1, choice)
    psi_hat1 = float(np.sum(scores / capped)) / data.n_rows

    hessian1, score_outer1 = _cross_moments(sub.X, sub.y, w, beta_tilde1)
    return PilotEstimate(
        beta_tilde1=beta_tilde1,
        beta1=beta1,
        offset_b=offset,
        psi_hat1=psi_hat1,
        hessian1=hessian1,
        score_outer1=score_outer1,
        choice=choice,
        pilot=sub,
        mode=mode,
        c0=c0,
        c1=c1,
        report=report,
    )


def stage_probabilities(data: DataSource, pilot: PilotEstimate,
                        choice: HChoice | None = None,
                        block_size: int | None = None) -> ProbabilityVector:
    """Score every row with the pilot estimate (one full pass)."""
    return compute_pi_os(data, pilot.beta1, choice or pilot.choice, block_size)


def _drawn_stage(data: DataSource, pilot: PilotEstimate, n: int, seed: int,
                 choice: HChoice | None, block_size: int | None) -> tuple[Subsample, ProbabilityVector]:
    probs = stage_probabilities(data, pilot, choice, block_size)
    idx = draw_indexes_with_replacement(probs, n, seed)
    return gather_sorted(data, idx, probs, block_size), probs


def fit_unweighted_replacement(data: DataSource, pilot: PilotEstimate, n: int,
                               seed: int, choice: HChoice | None = None,
                               block_size: int | None = None) -> StageEstimate:
    """Stage estimate from a with-replacement draw, fitted unweighted.

    The subsample maximizer ``beta_tilde`` targets the difference
    between the truth and the pilot estimate, so the returned
    ``beta_hat`` is ``beta_tilde + beta1``.  Two full passes: one to
    score rows, one to gather the drawn indexes.
    """
    sub, _ = _drawn_stage(data, pilot, n, seed, choice, block_size)
    report = newton_maximize(sub.X, sub.y)
    beta_tilde = report.beta
    H, S = _cross_moments(sub.X, sub.y, np.ones(sub.realized_size), beta_tilde)
    return StageEstimate(
        beta_tilde=beta_tilde,
        beta_hat=beta_tilde + pilot.beta1,
        hessian=H,
        score_outer=S,
        subsample=sub,
        report=report,
        kind="replacement",
    )


def fit_poisson(data: DataSource, pilot: PilotEstimate, n: int, seed: int,
                choice: HChoice | None = None,
                block_size: int | None = None) -> StageEstimate:
    """Stage estimate from a one-pass Poisson subsample.

    Rows kept with certainty (threshold above one) carry their
    threshold as weight; all other rows weigh one.  The fit maximizes
    that capped-weight likelihood, and the bias correction is the same
    pilot shift as in the with-replacement pipeline.
    """
    sub = poisson_scan(data, pilot.beta1, pilot.psi_hat1, choice or pilot.choice,
                       n, seed, block_size)
    if sub.realized_size == 0:
        raise EstimationError("Poisson scan returned an empty subsample")
    report = newton_maximize(sub.X, sub.y, w=sub.weights)
    beta_tilde = report.beta
    H, S = _cross_moments(sub.X, sub.y, sub.weights, beta_tilde)
    return StageEstimate(
        beta_tilde=beta_tilde,
        beta_hat=beta_tilde + pilot.beta1,
        hessian=H,
        score_outer=S,
        subsample=sub,
        report=report,
        kind="poisson",
    )


def _weighted_fit(sub: Subsample, weights: np.ndarray, init: np.ndarray) -> FitReport:
    # The maximizer is invariant to a positive rescaling of the
    # weights; normalizing to mean one keeps the convergence test on
    # the score at a sane absolute scale.
    scaled = weights / np.mean(weights)
    return newton_maximize(sub.X, sub.y, w=scaled, init=init)


def fit_weighted_osmac(data: DataSource, pilot: PilotEstimate, n: int, seed: int,
                       choice: HChoice | None = None,
                       block_size: int | None = None) -> WeightedEstimate:
    """Classical weighted estimator on the stage subsample alone.

    Same scoring pass, same index draw as the unweighted pipeline for
    the same seed; the fit weighs each row by the inverse of its
    sampling probability.
    """
    sub, _ = _drawn_stage(data, pilot, n, seed, choice, block_size)
    report = _weighted_fit(sub, 1.0 / sub.probs, pilot.beta1)
    sub = Subsample(sub.X, sub.y, sub.probs, 1.0 / sub.probs,
                    sub.origin_indexes, sub.nominal_size)
    return WeightedEstimate(beta=report.beta, report=report, subsample=sub, pooled=False)


def fit_weighted_combined(data: DataSource, pilot: PilotEstimate, n: int, seed: int,
                          choice: HChoice | None = None,
                          block_size: int | None = None) -> WeightedEstimate:
    """Weighted baseline that pools pilot and stage rows.

    Pilot rows weigh the inverse of their case-control rate, stage rows
    the inverse of their scored probability, and one weighted fit runs
    on the union.  This is the estimator the efficiency comparisons
    treat as the reference.
    """
    sub, _ = _drawn_stage(data, pilot, n, seed, choice, block_size)
    X = np.vstack([pilot.pilot.X, sub.X])
    y = np.concatenate([pilot.pilot.y, sub.y])
    w = np.concatenate([1.0 / pilot.pilot.probs, 1.0 / sub.probs])
    pooled = Subsample(
        X=X, y=y,
        probs=np.concatenate([pilot.pilot.probs, sub.probs]),
        weights=w,
        origin_indexes=np.concatenate([pilot.pilot.origin_indexes, sub.origin_indexes]),
        nominal_size=pilot.pilot.nominal_size + n,
    )
    report = _weighted_fit(pooled, w, pilot.beta1)
    return WeightedEstimate(beta=report.beta, report=report, subsample=pooled, pooled=True)


def combine(pilot: PilotEstimate, stage: StageEstimate) -> CombinedEstimate:
    """Precision-weighted average of the pilot and stage estimates.

    Uses the Hessians at the uncorrected maximizers.  A zero Hessian on
    either side hands the result to the other side exactly.
    """
    H1, H2 = pilot.hessian1, stage.hessian
    if not H1.any():
        return CombinedEstimate(beta_check=stage.beta_hat.copy())
    if not H2.any():
        return CombinedEstimate(beta_check=pilot.beta1.copy())
    B = H1 + H2
    try:
        beta = np.linalg.solve(B, H1 @ pilot.beta1 + H2 @ stage.beta_hat)
    except np.linalg.LinAlgError as exc:
        raise EstimationError("combined Hessian is singular") from exc
    return CombinedEstimate(beta_check=beta)


def variance_full(pilot: PilotEstimate, stage: StageEstimate) -> np.ndarray:
    """Sandwich variance of the combined estimate.

    Bread: inverse of the summed Hessians.  Meat: summed outer products
    of per-row scores, squared weights included, from both subsamples.
    """
    B = pilot.hessian1 + stage.hessian
    meat = pilot.score_outer1 + stage.score_outer
    try:
        T = np.linalg.solve(B, meat)
        V = np.linalg.solve(B, T.T).T
    except np.linalg.LinAlgError as exc:
        raise EstimationError("combined Hessian is singular") from exc
    return (V + V.T) / 2.0


def variance_simplified(pilot: PilotEstimate, stage: StageEstimate) -> np.ndarray:
    """Inverse summed Hessians; adequate when the subsampling rate is small."""
    B = pilot.hessian1 + stage.hessian
    try:
        V = np.linalg.inv(B)
    except np.linalg.LinAlgError as exc:
        raise EstimationError("combined Hessian is singular") from exc
    return (V + V.T) / 2.0


def attach_variance(pilot: PilotEstimate, stage: StageEstimate,
                    combined: CombinedEstimate, kind: str = "full") -> CombinedEstimate:
    """Fill ``vcov`` on a combined estimate, in place."""
    if kind == "full":
        combined.vcov = variance_full(pilot, stage)
    elif kind == "simplified":
        combined.vcov = variance_simplified(pilot, stage)
    else:
        raise ConfigError(f"unknown variance kind {kind!r}")
    combined.vcov_kind = kind
    return combined


def full_data_mle(data: DataSource, tol: float = 1e-8, max_iter: int = 100,
                  block_size: int | None = None) -> FitReport:
    """Streaming Newton MLE over the full dataset.

    Each iteration accumulates log-likelihood, score, and Hessian in
    one pass; a rejected (log-likelihood-decreasing) step triggers
    extra evaluation passes while the step is halved.
    """
    from .logistic import MAX_STEP_HALVINGS, SEPARATION_BOUND, log1pexp
    from .errors import SeparationError
    from .logistic import _solve_spd

    d = data.dim
    beta = np.zeros(d)

    def stats(b):
        ll = 0.0
        s = np.zeros(d)
        H = np.zeros((d, d))
        n0 = n1 = 0
        for _, X, y in data.iter_blocks(block_size):
            eta = X @ b
            p = sigmoid(eta)
            ll += float(np.sum(y * eta - log1pexp(eta)))
            s += X.T @ (y - p)
            H += (X * (p * (1.0 - p))[:, None]).T @ X
            n1 += int(np.sum(y))
            n0 += len(y) - int(np.sum(y))
        return ll, s, H, n0, n1

    ll, s, H, n0, n1 = stats(beta)
    if n0 == 0 or n1 == 0:
        raise SeparationError("full data carries a single label class")
    trace = [ll]
    iterations = 0
    grad_norm = float(np.max(np.abs(s)))
    converged = grad_norm <= tol
    while not converged and iterations < max_iter:
        direction = _solve_spd(H, s)
        step = 1.0
        accepted = False
        for _ in range(MAX_STEP_HALVINGS + 1):
            cand = beta + step * direction
            cll, cs, cH, _, _ = stats(cand)
            if cll >= ll and np.isfinite(cll):
                beta, ll, s, H = cand, cll, cs, cH
                accepted = True
                break
            step *= 0.5
        iterations += 1
        trace.append(ll)
        if float(np.max(np.abs(beta))) > SEPARATION_BOUND:
            raise SeparationError("iterate diverged; labels appear separable")
        grad_norm = float(np.max(np.abs(s)))
        converged = grad_norm <= tol
        if not accepted:
            break
    return FitReport(beta=beta, iterations=iterations,
                     final_gradient_norm=grad_norm, converged=converged,
                     loglik_trace=trace)


def weighted_full_oracle(data: DataSource, pilot: PilotEstimate,
                         choice: HChoice | None = None) -> np.ndarray:
    """Full-data weighted shifted fit that the stage estimators track.

    Maximizes sum_i |y_i - p_i(beta1)| h(x_i) times the likelihood term
    at the shifted parameter, then undoes the shift.  Materializes the
    whole dataset; intended for verification at moderate N.
    """
    choice = choice or pilot.choice
    blocks = list(data.iter_blocks())
    X = np.vstack([b[1] for b in blocks])
    y = np.concatenate([b[2] for b in blocks])
    w = raw_score(X, y, pilot.beta1, choice)
    report = newton_maximize(X, y, w=w)
    return report.beta + pilot.beta1

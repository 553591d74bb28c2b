"""Monte Carlo estimation of asymptotic variance matrices.

For a covariate distribution, a true parameter, and a scale choice h,
the quantities below characterize the estimators' limiting behavior
(phi = p (1 - p) at x'beta_t, Phi = E phi h, averages over x):

    sigma       [E{phi h x x'} / (4 Phi)]^-1
                limit variance profile of the unweighted two-step
                estimators under with-replacement draws
    v_os        M^-1 {4 Phi E(phi x x' / h)} M^-1 with M = E phi x x'
                same object for the classical weighted estimator
    lambda_rho  E[phi h {Phi - rho phi h}_+ x x'] / (4 Phi^2)
                score variability under Poisson sampling at sampling
                rate rho = n / N, conditional on the data
    lambda_u    E[phi {rho phi h v Phi} h x x'] / (4 Phi^2)
                unconditional counterpart

The expected orderings, verified empirically here:

    sigma <= v_os, with equality at h = 1;
    sigma lambda_rho sigma < sigma for rho > 0 (Poisson beats
        with-replacement conditionally, thanks to the weight cap);
    sigma lambda_u sigma >= sigma (the unconditional Poisson variance
        concedes at most the pilot-estimation noise).

Estimation draws mc covariate rows in fixed-size chunks with per-chunk
child seeds, so results depend only on (seed, mc) and chunks could be
processed in any order or in parallel.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import rng as rng_mod
from .designs import CovariateGenerator
from .errors import ConfigError
from .probabilities import H_ALIASES, HChoice, KIND_MNORM, KIND_NORM, KIND_UNIT, h_value

CHUNK = 20_000


@dataclass
class MatrixEstimates:
    """Monte Carlo estimates of the asymptotic matrices."""

    sigma: np.ndarray
    v_os: np.ndarray
    m: np.ndarray
    lambda_rho: np.ndarray
    lambda_u: np.ndarray
    phi_bar: float
    rho: float
    h_kind: str
    mc: int
    dropped: int  # rows with h(x) = 0, excluded from the v_os average


def _phi(X: np.ndarray, beta_t: np.ndarray) -> np.ndarray:
    from .logistic import sigmoid

    p = sigmoid(X @ beta_t)
    return p * (1.0 - p)


def _chunks(gen: CovariateGenerator, mc: int, seed: int):
    start = 0
    index = 0
    while start < mc:
        size = min(CHUNK, mc - start)
        yield index, gen.draw(size, rng_mod.generator(seed, rng_mod.STREAM_DATA, index))
        start += size
        index += 1


def _sym(A: np.ndarray) -> np.ndarray:
    return (A + A.T) / 2.0


def estimate_matrices(gen: CovariateGenerator, beta_t: np.ndarray, h: str,
                      rho: float, mc: int, seed: int = 0) -> MatrixEstimates:
    """Estimate all five matrices from mc covariate draws.

    ``h`` accepts the user-facing names (unit, mvc, mmse).  The mmse
    moment matrix is the plug-in E phi x x' from the same draws, and
    Phi is plugged in from the same sample as well, so the estimates
    are mutually consistent.
    """
    if rho < 0:
        raise ConfigError("rho must be nonnegative")
    if mc < 2:
        raise ConfigError("mc must be at least 2")
    beta_t = np.asarray(beta_t, dtype=float)
    kind = H_ALIASES.get(h)
    if kind is None:
        raise ConfigError(f"unknown h choice {h!r}")

    d = gen.d
    # First pass: the second-moment matrix M = E phi x x', which both
    # resolves the mmse scale and serves as the bread of v_os.
    M_sum = np.zeros((d, d))
    for _, X in _chunks(gen, mc, seed):
        phi = _phi(X, beta_t)
        M_sum += (X * phi[:, None]).T @ X
    M = _sym(M_sum / mc)

    if kind == KIND_MNORM:
        choice = HChoice.mnorm(M)
    elif kind == KIND_NORM:
        choice = HChoice.norm()
    else:
        choice = HChoice(KIND_UNIT)

    # Second pass: everything that needs h but not Phi.
    A_sum = np.zeros((d, d))   # phi h x x'
    C_sum = np.zeros((d, d))   # phi / h x x'
    phi_h_sum = 0.0
    dropped = 0
    for _, X in _chunks(gen, mc, seed):
        phi = _phi(X, beta_t)
        hv = h_value(X, choice)
        A_sum += (X * (phi * hv)[:, None]).T @ X
        ok = hv > 0
        dropped += int(len(hv) - ok.sum())
        C_sum += (X[ok] * (phi[ok] / hv[ok])[:, None]).T @ X[ok]
        phi_h_sum += float(np.sum(phi * hv))

    phi_bar = phi_h_sum / mc
    if phi_bar <= 0:
        raise ConfigError("E phi h is zero under this design")
    A = _sym(A_sum / mc)
    C = _sym(C_sum / max(mc - dropped, 1))
    sigma = np.linalg.inv(A / (4.0 * phi_bar))
    M_inv = np.linalg.inv(M)
    v_os = _sym(M_inv @ (4.0 * phi_bar * C) @ M_inv)

    # Third pass: the Poisson matrices, which need Phi.
    L_rho_sum = np.zeros((d, d))
    L_u_sum = np.zeros((d, d))
    for _, X in _chunks(gen, mc, seed):
        phi = _phi(X, beta_t)
        hv = h_value(X, choice)
        fh = phi * hv
        trunc = np.maximum(phi_bar - rho * fh, 0.0)
        L_rho_sum += (X * (fh * trunc)[:, None]).T @ X
        cap = np.maximum(rho * fh, phi_bar)
        L_u_sum += (X * (phi * cap * hv)[:, None]).T @ X
    denom = 4.0 * phi_bar**2
    lambda_rho = _sym(L_rho_sum / mc / denom)
    lambda_u = _sym(L_u_sum / mc / denom)

    return MatrixEstimates(
        sigma=_sym(sigma), v_os=v_os, m=M,
        lambda_rho=lambda_rho, lambda_u=lambda_u,
        phi_bar=phi_bar, rho=rho, h_kind=kind, mc=mc, dropped=dropped,
    )


def loewner_leq(a: np.ndarray, b: np.ndarray, tol: float) -> bool:
    """True when a <= b in the Loewner order, up to -tol on the smallest

    eigenvalue of (b - a).  Both inputs must be symmetric.
    """
    for name, m in (("a", a), ("b", b)):
        if not np.allclose(m, m.T, rtol=0, atol=1e-10 * max(1.0, float(np.abs(m).max()))):
            raise ConfigError(f"matrix {name} is not symmetric")
    diff = _sym(b - a)
    return float(np.linalg.eigvalsh(diff)[0]) >= -tol


def mc_tolerance(estimates: MatrixEstimates) -> float:
    """Comparison tolerance: 5 / sqrt(mc), scaled by the largest entry."""
    scale = max(
        float(np.abs(estimates.sigma).max()),
        float(np.abs(estimates.v_os).max()),
    )
    return float(5.0 / np.sqrt(estimates.mc) * scale)


@dataclass
class PropositionReport:
    """Outcome of the matrix-ordering checks for one configuration."""

    estimates: MatrixEstimates
    tol: float
    efficiency_ok: bool            # sigma <= v_os
    efficiency_equality: bool      # ~equality, expected only at h = unit
    poisson_conditional_ok: bool   # sigma lambda_rho sigma <= sigma
    poisson_strict: bool           # strict gap at rho > 0
    poisson_unconditional_ok: bool # sigma lambda_u sigma >= sigma
    details: dict = field(default_factory=dict)

    @property
    def all_ok(self) -> bool:
        strict_needed = self.estimates.rho > 0
        return (
            self.efficiency_ok
            and self.poisson_conditional_ok
            and self.poisson_unconditional_ok
            and (self.poisson_strict or not strict_needed)
        )


def verify_propositions(gen: CovariateGenerator, beta_t: np.ndarray, h: str,
                        rho: float, mc: int, seed: int = 0) -> PropositionReport:
    """Estimate the matrices and check every claimed Loewner ordering."""
    est = estimate_matrices(gen, beta_t, h, rho, mc, seed)
    tol = mc_tolerance(est)
    sigma = est.sigma

    efficiency_ok = loewner_leq(sigma, est.v_os, tol)
    gap = float(np.abs(est.v_os - sigma).max())
    efficiency_equality = bool(gap <= tol)

    cond = _sym(sigma @ est.lambda_rho @ sigma)
    poisson_conditional_ok = loewner_leq(cond, sigma, tol)
    cond_eigs = np.linalg.eigvalsh(_sym(sigma - cond))
    poisson_strict = bool(cond_eigs[0] > 0)

    uncond = _sym(sigma @ est.lambda_u @ sigma)
    poisson_unconditional_ok = loewner_leq(sigma, uncond, tol)

    return PropositionReport(
        estimates=est,
        tol=tol,
        efficiency_ok=efficiency_ok,
        efficiency_equality=efficiency_equality,
        poisson_conditional_ok=poisson_conditional_ok,
        poisson_strict=poisson_strict,
        poisson_unconditional_ok=poisson_unconditional_ok,
        details={
            "equality_gap": gap,
            "conditional_min_eig": float(cond_eigs[0]),
            "unconditional_min_eig": float(np.linalg.eigvalsh(_sym(uncond - sigma))[0]),
        },
    )

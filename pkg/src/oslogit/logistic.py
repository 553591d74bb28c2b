"""Numerically careful logistic-regression primitives.

Everything downstream (pilot fits, stage fits, the full-data MLE)
funnels through these functions, so stability at extreme linear
predictors matters more than raw speed here.  The Hessian is stored in
its positive semi-definite orientation, sum_i w_i phi_i x_i x_i', and
the Newton step adds H^-1 s to the current iterate.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import SeparationError, SingularMatrixError

DEFAULT_TOL = 1e-8
DEFAULT_MAX_ITER = 100
MAX_STEP_HALVINGS = 30
SEPARATION_BOUND = 1e4
RIDGE_SCALE = 1e-8


def sigmoid(eta: np.ndarray | float) -> np.ndarray | float:
    """Logistic function, stable for any magnitude of ``eta``.

    Large positive and large negative arguments saturate to 1 and 0
    without overflow; both branches evaluate exp on nonpositive input.
    """
    eta = np.asarray(eta, dtype=float)
    out = np.empty_like(eta)
    pos = eta >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-eta[pos]))
    e = np.exp(eta[~pos])
    out[~pos] = e / (1.0 + e)
    if out.ndim == 0:
        return float(out)
    return out


def log1pexp(eta: np.ndarray | float) -> np.ndarray | float:
    """log(1 + e^eta) without overflow: eta + log1p(e^-eta) for eta > 0."""
    eta = np.asarray(eta, dtype=float)
    out = np.empty_like(eta)
    pos = eta > 0
    out[pos] = eta[pos] + np.log1p(np.exp(-eta[pos]))
    out[~pos] = np.log1p(np.exp(eta[~pos]))
    if out.ndim == 0:
        return float(out)
    return out


def predict_prob(x: np.ndarray, beta: np.ndarray) -> np.ndarray | float:
    """p(x, beta) = e^{x'beta} / (1 + e^{x'beta}) for a row or a matrix."""
    return sigmoid(np.asarray(x, dtype=float) @ np.asarray(beta, dtype=float))


def variance_weight(x: np.ndarray, beta: np.ndarray) -> np.ndarray | float:
    """phi = p (1 - p), the conditional Bernoulli variance."""
    p = predict_prob(x, beta)
    return p * (1.0 - p)


def weighted_loglik(X: np.ndarray, y: np.ndarray, w: np.ndarray, beta: np.ndarray) -> float:
    """sum_i w_i { y_i x_i'beta - log(1 + e^{x_i'beta}) }."""
    eta = X @ beta
    return float(np.sum(w * (y * eta - log1pexp(eta))))


def weighted_score(X: np.ndarray, y: np.ndarray, w: np.ndarray, beta: np.ndarray) -> np.ndarray:
    """Gradient of :func:`weighted_loglik`: sum_i w_i (y_i - p_i) x_i."""
    resid = y - sigmoid(X @ beta)
    return X.T @ (w * resid)


def weighted_hessian(X: np.ndarray, y: np.ndarray, w: np.ndarray, beta: np.ndarray) -> np.ndarray:
    """sum_i w_i phi_i x_i x_i', the negated curvature of the log-likelihood.

    Positive semi-definite by construction; ``y`` is accepted for
    signature symmetry but the curvature does not depend on it.
    """
    del y
    p = sigmoid(X @ beta)
    return (X * (w * p * (1.0 - p))[:, None]).T @ X


@dataclass
class FitReport:
    """Outcome of a Newton fit."""

    beta: np.ndarray
    iterations: int
    final_gradient_norm: float
    converged: bool
    loglik_trace: list[float] = field(default_factory=list)


def _solve_spd(H: np.ndarray, s: np.ndarray) -> np.ndarray:
    """Solve H d = s for symmetric positive-definite H, with a single

    scaled-ridge retry before giving up.
    """
    d = H.shape[0]
    try:
        np.linalg.cholesky(H)
        return np.linalg.solve(H, s)
    except np.linalg.LinAlgError:
        pass
    ridge = RIDGE_SCALE * max(float(np.trace(H)) / d, 1.0)
    try:
        Hr = H + ridge * np.eye(d)
        np.linalg.cholesky(Hr)
        return np.linalg.solve(Hr, s)
    except np.linalg.LinAlgError as exc:
        raise SingularMatrixError("Hessian is singular; cannot take a Newton step") from exc


def newton_maximize(
    X: np.ndarray,
    y: np.ndarray,
    w: np.ndarray | None = None,
    init: np.ndarray | None = None,
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
) -> FitReport:
    """Maximize the weighted logistic log-likelihood by damped Newton.

    Parameters
    ----------
    X, y : arrays of shape (n, d) and (n,)
        Covariate rows and 0/1 labels.
    w : array of shape (n,), optional
        Nonnegative observation weights; defaults to all ones.
    init : array of shape (d,), optional
        Starting point; defaults to the zero vector.
    tol : float
        Convergence threshold on the infinity norm of the score.
    max_iter : int
        Newton iteration cap.

    Raises
    ------
    SeparationError
        If the positive-weight rows carry only one label class, or the
        iterate runs away (infinity norm beyond 1e4), both symptoms of
        a divergent MLE.
    SingularMatrixError
        If the Hessian cannot be solved even with a ridge retry.

    Notes
    -----
    Each Newton direction is step-halved (at most 30 times) until the
    log-likelihood does not decrease, so the trace in the report is
    nondecreasing.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    n, d = X.shape
    w = np.ones(n) if w is None else np.asarray(w, dtype=float)
    if np.any(w < 0):
        raise ValueError("weights must be nonnegative")
    active = w > 0
    labels = y[active]
    if labels.size == 0 or labels.min() == labels.max():
        raise SeparationError("positive-weight rows carry a single label class")

    beta = np.zeros(d) if init is None else np.asarray(init, dtype=float).copy()
    ll = weighted_loglik(X, y, w, beta)
    trace = [ll]
    grad_norm = float(np.max(np.abs(weighted_score(X, y, w, beta))))
    iterations = 0
    converged = grad_norm <= tol

    while not converged and iterations < max_iter:
        s = weighted_score(X, y, w, beta)
        H = weighted_hessian(X, y, w, beta)
        direction = _solve_spd(H, s)
        step = 1.0
        accepted = False
        for _ in range(MAX_STEP_HALVINGS + 1):
            candidate = beta + step * direction
            cand_ll = weighted_loglik(X, y, w, candidate)
            if cand_ll >= ll and np.isfinite(cand_ll):
                beta = candidate
                ll = cand_ll
                accepted = True
                break
            step *= 0.5
        iterations += 1
        trace.append(ll)
        if float(np.max(np.abs(beta))) > SEPARATION_BOUND:
            raise SeparationError("iterate diverged; labels appear separable")
        grad_norm = float(np.max(np.abs(weighted_score(X, y, w, beta))))
        converged = grad_norm <= tol
        if not accepted:
            # No ascent step exists at this scale; we are at the floor
            # of floating-point resolution for this objective.
            break

    return FitReport(
        beta=beta,
        iterations=iterations,
        final_gradient_norm=grad_norm,
        converged=converged,
        loglik_trace=trace,
    )

"""Subsampling probabilities driven by a pilot estimate.

The probability assigned to row i is

    pi_i = |y_i - p_i(beta1)| h(x_i) / sum_j |y_j - p_j(beta1)| h(x_j)

where the scale function h is one of

    unit   h(x) = 1            emphasis purely on misclassification,
    norm   h(x) = ||x||        targets the trace of the estimator's
                               asymptotic variance,
    mnorm  h(x) = ||M^-1 x||   targets the mean squared error, with M a
                               weighted second-moment matrix of the
                               covariates.

A full scoring pass streams in blocks and keeps only the running score
vector, so it works unchanged on file-backed sources.  The score vector
itself (one float per row) is assumed to fit in memory.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DegenerateProbabilityError, SingularMatrixError
from .ingest import DataSource
from .logistic import sigmoid

KIND_UNIT = "unit"
KIND_NORM = "norm"
KIND_MNORM = "mnorm"

# User-facing aliases accepted by pipelines and the command line.
H_ALIASES = {
    "unit": KIND_UNIT,
    "mvc": KIND_NORM,
    "norm": KIND_NORM,
    "mmse": KIND_MNORM,
    "mnorm": KIND_MNORM,
}

MNORM_MAX_CONDITION = 1e12


@dataclass(frozen=True)
class HChoice:
    """A resolved scale function.

    ``m_inverse`` is required for the ``mnorm`` kind and must be absent
    otherwise.
    """

    kind: str
    m_inverse: np.ndarray | None = None

    def __post_init__(self):
        if self.kind not in (KIND_UNIT, KIND_NORM, KIND_MNORM):
            raise ConfigError(f"unknown h kind {self.kind!r}")
        if self.kind == KIND_MNORM and self.m_inverse is None:
            raise ConfigError("mnorm requires an inverse moment matrix")
        if self.kind != KIND_MNORM and self.m_inverse is not None:
            raise ConfigError(f"{self.kind} does not take a moment matrix")

    @staticmethod
    def unit() -> "HChoice":
        return HChoice(KIND_UNIT)

    @staticmethod
    def norm() -> "HChoice":
        return HChoice(KIND_NORM)

    @staticmethod
    def mnorm(m: np.ndarray) -> "HChoice":
        """Build the mnorm choice from the moment matrix M itself.

        Refuses matrices whose condition number makes the inverse
        numerically meaningless.
        """
        m = np.asarray(m, dtype=float)
        eigs = np.linalg.eigvalsh((m + m.T) / 2.0)
        if eigs[0] <= 0 or eigs[-1] / eigs[0] > MNORM_MAX_CONDITION:
            raise SingularMatrixError(
                "moment matrix is singular or too ill-conditioned for mnorm"
            )
        return HChoice(KIND_MNORM, np.linalg.inv(m))


def h_value(x: np.ndarray, choice: HChoice) -> np.ndarray | float:
    """Evaluate h on one covariate row or on a block of rows."""
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    X = x[None, :] if single else x
    if choice.kind == KIND_UNIT:
        out = np.ones(X.shape[0])
    elif choice.kind == KIND_NORM:
        out = np.sqrt(np.einsum("ij,ij->i", X, X))
    else:
        Z = X @ choice.m_inverse.T
        out = np.sqrt(np.einsum("ij,ij->i", Z, Z))
    return float(out[0]) if single else out


def raw_score(x: np.ndarray, y: np.ndarray | float, beta1: np.ndarray,
              choice: HChoice) -> np.ndarray | float:
    """Unnormalized sampling score |y - p(x, beta1)| h(x).

    Accepts a single row or a block.  Pure in its inputs: scores never
    depend on how the stream is chunked, so any block partition of the
    same rows yields bitwise identical values (single-row evaluation
    agrees to rounding, since it may take a different dot kernel).
    """
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    X = x[None, :] if single else x
    yv = np.atleast_1d(np.asarray(y, dtype=float))
    resid = np.abs(yv - sigmoid(X @ np.asarray(beta1, dtype=float)))
    out = resid * h_value(X, choice)
    return float(out[0]) if single else out


@dataclass
class ProbabilityVector:
    """Normalized subsampling probabilities for every row of a source.

    ``normalizer`` keeps the raw denominator sum_j |y_j - p_j| h(x_j);
    the probabilities are the raw scores divided by it.
    """

    probs: np.ndarray
    normalizer: float

    def __len__(self) -> int:
        return len(self.probs)


def compute_pi_os(data: DataSource, beta1: np.ndarray, choice: HChoice,
                  block_size: int | None = None) -> ProbabilityVector:
    """Score every row in one streaming pass and normalize.

    Raises
    ------
    DegenerateProbabilityError
        If every raw score is zero (a perfectly fitting pilot), since
        no probability vector exists then.
    """
    pieces = []
    for _, X, y in data.iter_blocks(block_size):
        pieces.append(raw_score(X, y, beta1, choice))
    raw = np.concatenate(pieces) if pieces else np.empty(0)
    total = float(sum(float(np.sum(p)) for p in pieces))
    if not np.isfinite(total) or total <= 0.0:
        raise DegenerateProbabilityError("all sampling scores are zero")
    return ProbabilityVector(probs=raw / total, normalizer=total)


def compute_m_matrix(X: np.ndarray, w: np.ndarray | None, beta: np.ndarray) -> np.ndarray:
    """Weighted average of phi_i x_i x_i' over the given rows.

    This is the plug-in moment matrix used to resolve the mnorm scale
    from a subsample.
    """
    X = np.asarray(X, dtype=float)
    n = X.shape[0]
    w = np.ones(n) if w is None else np.asarray(w, dtype=float)
    p = sigmoid(X @ np.asarray(beta, dtype=float))
    wsum = float(np.sum(w))
    if wsum <= 0:
        raise ConfigError("weights sum to zero")
    M = (X * (w * p * (1.0 - p))[:, None]).T @ X / wsum
    return (M + M.T) / 2.0

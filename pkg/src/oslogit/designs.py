"""Synthetic covariate designs used by the simulator and the verifier.

Six families, all parameterized by the dimension d and sharing the
equicorrelated base matrix S with unit diagonal and 0.5 off-diagonal:

    mzNormal   N(0, S); labels near balance
    nzNormal   N(1.5 * 1, S); roughly 95% of labels are one
    ueNormal   N(0, D S D) with D = diag(1/j); unequal column scales
    mixNormal  equal mixture of N(1, S) and N(-1, S); bimodal
    T3         multivariate t with 3 degrees of freedom, scale S / 10
    EXP        i.i.d. exponential with rate 2 per coordinate
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import rng as rng_mod
from .errors import ConfigError
from .ingest import DEFAULT_BLOCK_SIZE, InMemorySource
from .logistic import sigmoid

GENERATOR_KINDS = ("mzNormal", "nzNormal", "ueNormal", "mixNormal", "T3", "EXP")


def equicorrelated(d: int, off: float = 0.5) -> np.ndarray:
    """Unit-diagonal matrix with constant off-diagonal entries."""
    return np.full((d, d), off) + (1.0 - off) * np.eye(d)


@dataclass(frozen=True)
class CovariateGenerator:
    """A named covariate distribution of fixed dimension."""

    kind: str
    d: int

    def __post_init__(self):
        if self.kind not in GENERATOR_KINDS:
            raise ConfigError(
                f"unknown generator {self.kind!r}; choose from {', '.join(GENERATOR_KINDS)}"
            )
        if self.d < 1:
            raise ConfigError("dimension must be positive")

    def draw(self, n: int, rng: np.random.Generator) -> np.ndarray:
        """Draw an (n, d) block of covariate rows."""
        d = self.d
        S = equicorrelated(d)
        if self.kind == "mzNormal":
            return rng.standard_normal((n, d)) @ np.linalg.cholesky(S).T
        if self.kind == "nzNormal":
            return rng.standard_normal((n, d)) @ np.linalg.cholesky(S).T + 1.5
        if self.kind == "ueNormal":
            z = rng.standard_normal((n, d)) @ np.linalg.cholesky(S).T
            return z / np.arange(1, d + 1)
        if self.kind == "mixNormal":
            z = rng.standard_normal((n, d)) @ np.linalg.cholesky(S).T
            signs = np.where(rng.random(n) < 0.5, 1.0, -1.0)
            return z + signs[:, None]
        if self.kind == "T3":
            z = rng.standard_normal((n, d)) @ np.linalg.cholesky(S / 10.0).T
            w = rng.chisquare(3, n)
            return z * np.sqrt(3.0 / w)[:, None]
        # EXP: rate 2, mean 0.5 per coordinate
        return rng.exponential(scale=0.5, size=(n, d))

    def population_covariance(self) -> np.ndarray:
        """Exact covariance of one covariate row."""
        d = self.d
        S = equicorrelated(d)
        if self.kind in ("mzNormal", "nzNormal"):
            return S
        if self.kind == "ueNormal":
            scale = 1.0 / np.arange(1, d + 1)
            return S * np.outer(scale, scale)
        if self.kind == "mixNormal":
            return S + np.ones((d, d))
        if self.kind == "T3":
            return S / 10.0 * 3.0  # df / (df - 2) with df = 3
        return 0.25 * np.eye(d)


def make_generator(kind: str, d: int) -> CovariateGenerator:
    return CovariateGenerator(kind, d)


def generate(gen: CovariateGenerator, N: int, beta_t: np.ndarray, seed: int,
             block_size: int = DEFAULT_BLOCK_SIZE) -> InMemorySource:
    """Draw a full synthetic dataset: covariates, then Bernoulli labels.

    Covariates and label noise come from separate named sub-streams of
    ``seed``, so the same seed always yields the same dataset.
    """
    beta_t = np.asarray(beta_t, dtype=float)
    if beta_t.shape != (gen.d,):
        raise ConfigError(f"beta_t must have shape ({gen.d},)")
    X = gen.draw(N, rng_mod.generator(seed, rng_mod.STREAM_DATA))
    u = rng_mod.generator(seed, rng_mod.STREAM_LABELS).random(N)
    y = (u < sigmoid(X @ beta_t)).astype(float)
    return InMemorySource(X, y, block_size=block_size)

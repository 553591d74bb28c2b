"""Subsample drawing and single-pass row gathering.

Index draws are decoupled from row retrieval: a with-replacement draw
produces a sorted multiset of row indexes, and a separate forward pass
gathers those rows from the source.  Poisson sampling has no index
stage at all; one pass decides inclusion per row from a counter-based
uniform, so the decision for a row never depends on how the stream is
chunked.

With-replacement draws invert the cumulative probability sum at sorted
uniforms.  No alias table is built; the draw costs O(N + n log N) and
its output is already sorted for the gather pass.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import rng
from .errors import ConfigError, DataError
from .ingest import DataSource
from .logistic import sigmoid
from .probabilities import HChoice, ProbabilityVector, h_value


@dataclass
class Subsample:
    """Rows retrieved from a source, with their sampling metadata.

    ``probs`` holds the per-row sampling probability under the scheme
    that produced the subsample; ``weights`` the estimation weights the
    downstream fit should apply.  ``origin_indexes`` are zero-based row
    positions in the source, nondecreasing.
    """

    X: np.ndarray
    y: np.ndarray
    probs: np.ndarray
    weights: np.ndarray
    origin_indexes: np.ndarray
    nominal_size: int

    @property
    def realized_size(self) -> int:
        return len(self.y)


def draw_indexes_with_replacement(probs: ProbabilityVector | np.ndarray,
                                  n: int, seed: int) -> np.ndarray:
    """Draw ``n`` indexes i.i.d. from a categorical distribution.

    Returns a sorted array.  Rows with probability zero are never
    drawn.  The draw is a pure function of (probs, n, seed).
    """
    p = probs.probs if isinstance(probs, ProbabilityVector) else np.asarray(probs, dtype=float)
    if n <= 0:
        raise ConfigError("subsample size must be positive")
    if p.ndim != 1 or len(p) == 0:
        raise ConfigError("probability vector must be 1-d and nonempty")
    if np.any(p < 0):
        raise ConfigError("probabilities must be nonnegative")
    total = float(np.sum(p))
    if not np.isclose(total, 1.0, rtol=0, atol=1e-9):
        raise ConfigError(f"probabilities sum to {total}, not 1")
    cum = np.cumsum(p)
    u = rng.generator(seed, rng.STREAM_STAGE).random(n)
    u.sort()
    idx = np.searchsorted(cum, u, side="right")
    # Guard the u ~ 1 edge: never step past the last positive-probability row.
    last_positive = int(np.nonzero(p > 0)[0][-1])
    return np.minimum(idx, last_positive)


def gather_sorted(data: DataSource, sorted_indexes: np.ndarray,
                  probs: ProbabilityVector | None = None,
                  block_size: int | None = None) -> Subsample:
    """Materialize the rows named by a sorted index multiset.

    One forward pass; stops reading as soon as the last requested index
    has been passed.  An index that appears k times yields its row k
    times.  When ``probs`` is given, each gathered row carries its
    sampling probability; weights default to one.
    """
    idx = np.asarray(sorted_indexes)
    if idx.size == 0:
        raise ConfigError("no indexes to gather")
    if np.any(np.diff(idx) < 0):
        raise ConfigError("indexes must be sorted")
    if idx[0] < 0 or idx[-1] >= data.n_rows:
        raise DataError(f"index out of range: source has {data.n_rows} rows")

    taken_X = []
    taken_y = []
    pos = 0
    for start, X, y in data.iter_blocks(block_size):
        stop = start + len(y)
        hi = np.searchsorted(idx, stop, side="left")
        if hi > pos:
            local = idx[pos:hi] - start
            taken_X.append(X[local].copy())
            taken_y.append(y[local].copy())
            pos = hi
        if pos == len(idx):
            break

    Xs = np.vstack(taken_X)
    ys = np.concatenate(taken_y)
    if probs is not None:
        pr = probs.probs[idx]
    else:
        pr = np.full(len(idx), np.nan)
    return Subsample(
        X=Xs,
        y=ys,
        probs=pr,
        weights=np.ones(len(idx)),
        origin_indexes=idx.astype(np.int64, copy=True),
        nominal_size=len(idx),
    )


def poisson_scan(data: DataSource, beta1: np.ndarray, psi_hat1: float,
                 choice: HChoice, n: int, seed: int,
                 block_size: int | None = None) -> Subsample:
    """One-pass Poisson subsample with inclusion thresholds n * pi_i.

    Row i gets probability pi_i = |y_i - p_i(beta1)| h(x_i) / (N psi1)
    and enters the subsample when its counter-based uniform u_i is at
    most n * pi_i.  Included rows carry estimation weight
    max(n * pi_i, 1).  The realized size is random with expectation
    sum_i min(n * pi_i, 1).
    """
    if n <= 0:
        raise ConfigError("subsample size must be positive")
    if psi_hat1 <= 0 or not np.isfinite(psi_hat1):
        raise ConfigError("psi_hat1 must be positive and finite")
    beta1 = np.asarray(beta1, dtype=float)
    key = rng.counter_key(seed, rng.STREAM_POISSON)
    denom = data.n_rows * psi_hat1

    out_X, out_y, out_p, out_w, out_i = [], [], [], [], []
    for start, X, y in data.iter_blocks(block_size):
        resid = np.abs(y - sigmoid(X @ beta1))
        pi = resid * h_value(X, choice) / denom
        threshold = n * pi
        u = rng.counter_uniforms(key, start, len(y))
        keep = u <= threshold
        if np.any(keep):
            out_X.append(X[keep].copy())
            out_y.append(y[keep].copy())
            out_p.append(pi[keep])
            out_w.append(np.maximum(threshold[keep], 1.0))
            out_i.append(start + np.nonzero(keep)[0])

    if out_y:
        Xs = np.vstack(out_X)
        ys = np.concatenate(out_y)
        pr = np.concatenate(out_p)
        ws = np.concatenate(out_w)
        oi = np.concatenate(out_i).astype(np.int64)
    else:
        Xs = np.empty((0, data.dim))
        ys = np.empty(0)
        pr = np.empty(0)
        ws = np.empty(0)
        oi = np.empty(0, dtype=np.int64)
    return Subsample(X=Xs, y=ys, probs=pr, weights=ws, origin_indexes=oi, nominal_size=n)


def case_control_rates(c0: float, c1: float, y: np.ndarray) -> np.ndarray:
    """Per-row pilot rates {c0 (1 - y) + c1 y} / N before any normalization."""
    return (c0 * (1.0 - y) + c1 * y) / len(y)


def pilot_rates_from_prior(p_prior: float) -> tuple[float, float]:
    """Case-control constants from a prior guess of the label-1 share.

    c0 = 1 / (2 (1 - p)) and c1 = 1 / (2 p) make the expected pilot
    roughly label-balanced.
    """
    if not 0.0 < p_prior < 1.0:
        raise ConfigError("prior label share must lie strictly between 0 and 1")
    return 1.0 / (2.0 * (1.0 - p_prior)), 1.0 / (2.0 * p_prior)


def _collect_labels(data: DataSource, block_size: int | None = None) -> np.ndarray:
    out = [y for _, _, y in data.iter_blocks(block_size)]
    return np.concatenate(out)


def draw_pilot_indexes(data: DataSource, c0: float, c1: float, n1: int,
                       seed: int, mode: str = "replacement",
                       block_size: int | None = None) -> Subsample:
    """Draw and gather the pilot subsample.

    With-replacement mode draws n1 indexes from the normalized
    case-control rates; it needs one label pass when c0 != c1 (uniform
    rates need none) plus the gather pass.  Poisson mode decides
    inclusion in a single pass with thresholds n1 * rate_i and attaches
    estimation weights max(n1 * rate_i, 1).

    Either way, each returned row's ``probs`` entry is its raw
    case-control rate {c0 (1 - y) + c1 y} / N.
    """
    if n1 <= 0:
        raise ConfigError("pilot size must be positive")
    if c0 <= 0 or c1 <= 0:
        raise ConfigError("case-control constants must be positive")
    N = data.n_rows

    if mode == "replacement":
        u = rng.generator(seed, rng.STREAM_PILOT).random(n1)
        u.sort()
        if c0 == c1:
            # Uniform rates invert to plain index scaling; no label pass.
            idx = np.minimum((u * N).astype(np.int64), N - 1)
            rates = None
        else:
            labels = _collect_labels(data, block_size)
            rates = case_control_rates(c0, c1, labels)
            cum = np.cumsum(rates / rates.sum())
            idx = np.minimum(np.searchsorted(cum, u, side="right"), N - 1)
        sub = gather_sorted(data, idx, block_size=block_size)
        sub.probs = np.full(n1, c0 / N) if rates is None else rates[idx]
        sub.nominal_size = n1
        return sub

    if mode == "poisson":
        key = rng.counter_key(seed, rng.STREAM_PILOT)
        out_X, out_y, out_p, out_w, out_i = [], [], [], [], []
        for start, X, y in data.iter_blocks(block_size):
            rate = (c0 * (1.0 - y) + c1 * y) / N
            threshold = n1 * rate
            u = rng.counter_uniforms(key, start, len(y))
            keep = u <= threshold
            if np.any(keep):
                out_X.append(X[keep].copy())
                out_y.append(y[keep].copy())
                out_p.append(rate[keep])
                out_w.append(np.maximum(threshold[keep], 1.0))
                out_i.append(start + np.nonzero(keep)[0])
        if not out_y:
            raise DataError("pilot scan selected no rows; increase n1")
        return Subsample(
            X=np.vstack(out_X),
            y=np.concatenate(out_y),
            probs=np.concatenate(out_p),
            weights=np.concatenate(out_w),
            origin_indexes=np.concatenate(out_i).astype(np.int64),
            nominal_size=n1,
        )

    raise ConfigError(f"unknown pilot mode {mode!r}")

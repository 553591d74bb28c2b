"""Deterministic randomness utilities.

All pipeline randomness descends from a single user seed.  Named
sub-streams keep the pilot draw, the stage draw, and the data generator
independent of each other while staying reproducible: the same seed
always yields the same bits regardless of which pipelines run or in
which order.

Per-row randomness for single-pass inclusion sampling uses a
counter-based generator keyed by (seed, row index), so any chunking of
the stream, or processing chunks in parallel, produces identical
decisions for every row.
"""

from __future__ import annotations

import numpy as np

# Stream labels for seed derivation.  Fixed small integers, never reused.
STREAM_PILOT = 1
STREAM_STAGE = 2
STREAM_POISSON = 3
STREAM_DATA = 4
STREAM_LABELS = 5

DEFAULT_SEED = 20230425


def child_seed_sequence(seed: int, *stream: int) -> np.random.SeedSequence:
    """SeedSequence for a named sub-stream of ``seed``."""
    return np.random.SeedSequence([int(seed), *[int(s) for s in stream]])


def generator(seed: int, *stream: int) -> np.random.Generator:
    """A PCG64 generator on the sub-stream (seed, *stream)."""
    return np.random.Generator(np.random.PCG64(child_seed_sequence(seed, *stream)))


def counter_key(seed: int, *stream: int) -> int:
    """A 64-bit key for the counter-based per-row generator."""
    state = child_seed_sequence(seed, *stream).generate_state(2, dtype=np.uint64)
    return int(state[0] ^ (state[1] << np.uint64(1)))


def derive_int(seed: int, *stream: int) -> int:
    """A plain integer seed for the sub-stream (seed, *stream)."""
    return int(child_seed_sequence(seed, *stream).generate_state(1, dtype=np.uint64)[0])


_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_GOLDEN = np.uint64(0x9E3779B97F4A7C15)


def _mix64(z: np.ndarray) -> np.ndarray:
    # SplitMix64 finalizer; uint64 arithmetic wraps modulo 2**64.
    z = (z ^ (z >> np.uint64(30))) * _M1
    z = (z ^ (z >> np.uint64(27))) * _M2
    return z ^ (z >> np.uint64(31))


def counter_uniforms(key: int, start: int, count: int) -> np.ndarray:
    """Uniforms in (0, 1] for row indexes ``start .. start+count-1``.

    Stateless: u[i] depends only on (key, start + i).  The half-open
    range (0, 1] makes a zero inclusion threshold reject with certainty
    and a threshold of one accept with certainty.
    """
    if count < 0:
        raise ValueError("count must be nonnegative")
    idx = np.arange(start, start + count, dtype=np.uint64)
    with np.errstate(over="ignore"):
        z = _mix64(_mix64(idx * _GOLDEN + np.uint64(key)))
    return ((z >> np.uint64(11)) + np.uint64(1)) * 2.0**-53

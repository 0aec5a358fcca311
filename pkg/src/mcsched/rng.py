"""Counter-based random streams keyed by (seed, kind, i, j, t).

Every random quantity in a simulation is a pure function of the run seed and
its coordinates, so arrival and channel streams are mutually independent,
replays are bit-identical, and two policies simulated on the same seed see
exactly the same realizations without materializing anything.

Draws are produced by double application of the splitmix64 finalizer to a
bit-packed key.  Bernoulli/uniform comparisons use the top 53 bits against an
integer threshold, so a probability is honoured to within 2**-53.
"""
from __future__ import annotations

import numpy as np
from numba import njit

# Stream kinds (4-bit field in the key).
KIND_CHANNEL = 1
KIND_ARRIVAL = 2
KIND_CHANNEL_INIT = 3
KIND_ARRIVAL_INIT = 4

# Coordinate field widths: kind:4 | i:14 | j:14 | t:32.
MAX_ENTITY = (1 << 14) - 1
MAX_SLOT = (1 << 32) - 1

U53_SCALE = float(1 << 53)


@njit(cache=True, inline="always")
def _mix64(x):
    x = np.uint64(x)
    x ^= x >> np.uint64(30)
    x = x * np.uint64(0xBF58476D1CE4E5B9)
    x ^= x >> np.uint64(27)
    x = x * np.uint64(0x94D049BB133111EB)
    x ^= x >> np.uint64(31)
    return x


@njit(cache=True, inline="always")
def seed_mix(seed):
    """Per-run premixed seed word; pass this to the draw functions."""
    return _mix64(np.uint64(seed) + np.uint64(0x9E3779B97F4A7C15))


@njit(cache=True, inline="always")
def draw_u64(seedmix, kind, i, j, t):
    key = (
        (np.uint64(kind) << np.uint64(60))
        | (np.uint64(i) << np.uint64(46))
        | (np.uint64(j) << np.uint64(32))
        | np.uint64(t)
    )
    return _mix64(_mix64(np.uint64(seedmix) ^ key))


@njit(cache=True, inline="always")
def draw_u53(seedmix, kind, i, j, t):
    """Uniform integer in [0, 2**53); compare against threshold53()."""
    return np.int64(draw_u64(seedmix, kind, i, j, t) >> np.uint64(11))


def threshold53(p: float) -> int:
    """Integer threshold so that draw_u53 < threshold53(p) has probability p."""
    p = min(max(float(p), 0.0), 1.0)
    return int(round(p * U53_SCALE))


def dyadic_bits(p: float) -> int:
    """Return k such that p == m/2**k with k in {1,..,8}, else 0.

    Dyadic ON-probabilities allow slicing several Bernoulli draws out of one
    64-bit word, which matters for n*n i.i.d. channel matrices.
    """
    for k in range(1, 9):
        scaled = p * (1 << k)
        if abs(scaled - round(scaled)) < 1e-12 and 0 <= round(scaled) <= (1 << k):
            return k
    return 0

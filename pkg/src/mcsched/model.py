"""System primitives: packets, packet ordering, arrival/channel processes, sample paths.

A queue holds FIFO packets; a packet's delay is always derived as
``current_slot - arrival_slot``.  Sample paths are generated from counter-based
random streams (see :mod:`mcsched.rng`) so that replaying a (config, seed) pair
reproduces arrivals and connectivity bit for bit, and every policy simulated on
the same pair observes the same realizations.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Union

import numpy as np
from numba import njit

from . import rng

Matrix2 = tuple[tuple[float, float], tuple[float, float]]


class ConfigError(ValueError):
    """Invalid model configuration (bad probability, non-stochastic matrix, ...)."""


# ---------------------------------------------------------------------------
# Packets and packet ordering
# ---------------------------------------------------------------------------

@dataclass(frozen=True, slots=True)
class Packet:
    """A packet identified by (arrival_slot, queue_id, arrival_index).

    ``queue_id`` is 1-based; ``arrival_index`` is the packet's 1-based order
    among same-slot arrivals to its queue.  Delay is never stored: at slot t it
    is exactly ``t - arrival_slot``.
    """

    arrival_slot: int
    queue_id: int
    arrival_index: int

    def delay(self, current_slot: int) -> int:
        return current_slot - self.arrival_slot


def packet_age_key(p: Packet) -> tuple[int, int, int]:
    """Sort key that orders packets oldest-first.

    Ascending (arrival_slot, queue_id, arrival_index) ranks packets exactly as
    descending fractional weight delay + (n+1-q)/(n+1) + (L+1-x)/((L+1)(n+1)):
    larger delay first, then smaller queue id, then smaller arrival index.
    """
    return (p.arrival_slot, p.queue_id, p.arrival_index)


def packet_precedes(p1: Packet, p2: Packet, current_slot: int) -> bool:
    """True iff p1 is strictly older than p2 at ``current_slot``.

    Integer lexicographic comparison; rank-equivalent to comparing fractional
    packet weights, without float-equality hazards.
    """
    if p1.arrival_slot > current_slot or p2.arrival_slot > current_slot:
        raise ValueError("packets must have arrived by current_slot")
    return packet_age_key(p1) < packet_age_key(p2)


# ---------------------------------------------------------------------------
# Process specifications
# ---------------------------------------------------------------------------

def _check_prob(p: float, what: str) -> None:
    if not (0.0 <= p <= 1.0) or not np.isfinite(p):
        raise ConfigError(f"{what} must be a probability in [0, 1], got {p!r}")


def _check_matrix(m: Matrix2, what: str) -> None:
    if len(m) != 2 or any(len(row) != 2 for row in m):
        raise ConfigError(f"{what} must be a 2x2 matrix")
    for row in m:
        for p in row:
            _check_prob(p, f"{what} entry")
        if abs(sum(row) - 1.0) > 1e-12:
            raise ConfigError(f"{what} rows must sum to 1 within 1e-12, got {row}")
    # Stationary initialization needs an irreducible chain.
    if m[0][1] + m[1][0] <= 0.0:
        raise ConfigError(f"{what} must have at least one off-diagonal transition")


def _stationary_state0(m: Matrix2) -> float:
    """Stationary probability of state 0 for a 2-state row-stochastic matrix."""
    return m[1][0] / (m[0][1] + m[1][0])


@dataclass(frozen=True)
class IidBernoulli0L:
    """Per slot, L packets with probability alpha, otherwise none."""

    alpha: float
    L: int

    def validate(self) -> None:
        _check_prob(self.alpha, "alpha")
        if self.L < 1:
            raise ConfigError(f"L must be >= 1, got {self.L}")

    @property
    def max_per_slot(self) -> int:
        return self.L

    @property
    def mean_rate(self) -> float:
        return self.alpha * self.L


@dataclass(frozen=True)
class TwoStateMarkov:
    """Markov-modulated arrivals: ``burst`` packets in state 1, none in state 2.

    ``transition`` is row-stochastic, rows/cols ordered (state 1, state 2);
    transitions occur at the end of each slot; chains start stationary.
    """

    transition: Matrix2
    burst: int

    def validate(self) -> None:
        _check_matrix(self.transition, "arrival transition matrix")
        if self.burst < 1:
            raise ConfigError(f"burst must be >= 1, got {self.burst}")

    @property
    def max_per_slot(self) -> int:
        return self.burst

    @property
    def mean_rate(self) -> float:
        return _stationary_state0(self.transition) * self.burst


@dataclass(frozen=True)
class IidOnOff:
    """Each link i.i.d. ON with probability q, across links and slots."""

    q: float

    def validate(self) -> None:
        _check_prob(self.q, "q")


@dataclass(frozen=True)
class TwoStateMarkovChannel:
    """Per-link 2-state chains, ON in state 1; odd-indexed (1-based) queues are
    near-users using ``near_transition``, even-indexed are far-users."""

    near_transition: Matrix2
    far_transition: Matrix2

    def validate(self) -> None:
        _check_matrix(self.near_transition, "near transition matrix")
        _check_matrix(self.far_transition, "far transition matrix")


ArrivalSpec = Union[IidBernoulli0L, TwoStateMarkov]
ChannelSpec = Union[IidOnOff, TwoStateMarkovChannel]


@dataclass(frozen=True)
class ModelConfig:
    n: int
    horizon: int
    arrival: ArrivalSpec
    channel: ChannelSpec

    def validate(self) -> None:
        if self.n < 1 or self.n > rng.MAX_ENTITY:
            raise ConfigError(f"n must be in [1, {rng.MAX_ENTITY}], got {self.n}")
        if self.horizon < 1 or self.horizon > rng.MAX_SLOT:
            raise ConfigError(f"horizon must be in [1, {rng.MAX_SLOT}], got {self.horizon}")
        self.arrival.validate()
        self.channel.validate()

    @property
    def max_arrivals_per_slot(self) -> int:
        return self.arrival.max_per_slot


# ---------------------------------------------------------------------------
# Packed generator parameters consumed by the jitted helpers
# ---------------------------------------------------------------------------

ARR_IID = 0
ARR_MARKOV = 1
CHAN_IID = 2
CHAN_MARKOV = 3


@dataclass(frozen=True)
class GenParams:
    """Integer-threshold form of a ModelConfig, shared by SamplePath and the
    fused simulation loop so both produce identical streams."""

    n: int
    horizon: int
    seedmix: np.uint64
    akind: int
    a_thr: int          # P(burst slot) threshold for iid arrivals
    a_amount: int       # packets delivered on a burst slot
    a_trans: np.ndarray  # int64[2], thresholds of moving to state 0
    a_pi0: int          # stationary P(state 0) threshold
    ckind: int
    c_thr: int          # P(ON) threshold for iid channels
    c_bits: int         # dyadic width for bit-sliced iid draws, 0 = generic
    c_m: int            # ON iff lane value < c_m when bit-sliced
    c_near: np.ndarray  # int64[2]
    c_far: np.ndarray   # int64[2]
    c_pin: int
    c_pif: int


def make_gen_params(config: ModelConfig, seed: int) -> GenParams:
    config.validate()
    zeros2 = np.zeros(2, dtype=np.int64)
    a = config.arrival
    if isinstance(a, IidBernoulli0L):
        akind, a_thr, a_amount, a_trans, a_pi0 = ARR_IID, rng.threshold53(a.alpha), a.L, zeros2, 0
    else:
        m = a.transition
        a_trans = np.array([rng.threshold53(m[0][0]), rng.threshold53(m[1][0])], dtype=np.int64)
        akind, a_thr, a_amount, a_pi0 = ARR_MARKOV, 0, a.burst, rng.threshold53(_stationary_state0(m))
    c = config.channel
    if isinstance(c, IidOnOff):
        bits = rng.dyadic_bits(c.q)
        c_m = int(round(c.q * (1 << bits))) if bits else 0
        ckind, c_thr, c_near, c_far, c_pin, c_pif = CHAN_IID, rng.threshold53(c.q), zeros2, zeros2, 0, 0
    else:
        bits = c_m = 0
        nm, fm = c.near_transition, c.far_transition
        c_near = np.array([rng.threshold53(nm[0][0]), rng.threshold53(nm[1][0])], dtype=np.int64)
        c_far = np.array([rng.threshold53(fm[0][0]), rng.threshold53(fm[1][0])], dtype=np.int64)
        ckind, c_thr = CHAN_MARKOV, 0
        c_pin, c_pif = rng.threshold53(_stationary_state0(nm)), rng.threshold53(_stationary_state0(fm))
    return GenParams(
        n=config.n, horizon=config.horizon,
        seedmix=np.uint64(rng.seed_mix(np.uint64(int(seed) & 0xFFFFFFFFFFFFFFFF))),
        akind=akind, a_thr=a_thr, a_amount=a_amount, a_trans=a_trans, a_pi0=a_pi0,
        ckind=ckind, c_thr=c_thr, c_bits=bits, c_m=c_m,
        c_near=c_near, c_far=c_far, c_pin=c_pin, c_pif=c_pif,
    )


@njit(cache=True)
def init_chain_states(seedmix, akind, a_pi0, a_state, ckind, c_pin, c_pif, c_state):
    n = a_state.shape[0]
    if akind == ARR_MARKOV:
        for i in range(n):
            u = rng.draw_u53(seedmix, rng.KIND_ARRIVAL_INIT, i, 0, 0)
            a_state[i] = 0 if u < a_pi0 else 1
    if ckind == CHAN_MARKOV:
        for i in range(n):
            pi = c_pin if (i & 1) == 0 else c_pif
            for j in range(n):
                u = rng.draw_u53(seedmix, rng.KIND_CHANNEL_INIT, i, j, 0)
                c_state[i, j] = 0 if u < pi else 1


@njit(cache=True)
def gen_arrivals(seedmix, t, akind, a_thr, a_amount, a_trans, a_state, out):
    """Fill out[i] with the slot-t arrival count of queue i; advance chains.

    Markov chains emit from the state held during slot t and transition at the
    end of the slot.
    """
    n = out.shape[0]
    if akind == ARR_IID:
        for i in range(n):
            u = rng.draw_u53(seedmix, rng.KIND_ARRIVAL, i, 0, t)
            out[i] = a_amount if u < a_thr else 0
    else:
        for i in range(n):
            s = a_state[i]
            out[i] = a_amount if s == 0 else 0
            u = rng.draw_u53(seedmix, rng.KIND_ARRIVAL, i, 0, t)
            a_state[i] = 0 if u < a_trans[s] else 1


@njit(cache=True)
def gen_conn(seedmix, t, ckind, c_thr, c_bits, c_m, c_near, c_far, c_state, out):
    """Fill out[i, j] with slot-t connectivity; advance per-link chains."""
    n = out.shape[0]
    if ckind == CHAN_IID:
        if c_bits > 0:
            lanes = 64 // c_bits
            mask = np.uint64((1 << c_bits) - 1)
            m = np.uint64(c_m)
            for i in range(n):
                j = 0
                block = 0
                while j < n:
                    word = rng.draw_u64(seedmix, rng.KIND_CHANNEL, i, block, t)
                    lane = 0
                    while lane < lanes and j < n:
                        v = (word >> np.uint64(lane * c_bits)) & mask
                        out[i, j] = 1 if v < m else 0
                        lane += 1
                        j += 1
                    block += 1
        else:
            for i in range(n):
                for j in range(n):
                    u = rng.draw_u53(seedmix, rng.KIND_CHANNEL, i, j, t)
                    out[i, j] = 1 if u < c_thr else 0
    else:
        for i in range(n):
            tt = c_near if (i & 1) == 0 else c_far
            for j in range(n):
                s = c_state[i, j]
                out[i, j] = 1 if s == 0 else 0
                u = rng.draw_u53(seedmix, rng.KIND_CHANNEL, i, j, t)
                c_state[i, j] = 0 if u < tt[s] else 1


# ---------------------------------------------------------------------------
# Sample paths
# ---------------------------------------------------------------------------

class SamplePath:
    """Stream-replayable realization of arrivals A_i(t) and connectivity C_ij(t).

    Immutable in the sense that any access at slot t always returns the same
    values for the same (config, seed); Markov chains are advanced internally
    and transparently replayed on backward access.
    """

    def __init__(self, config: ModelConfig, seed: int):
        config.validate()
        self.config = config
        self.seed = int(seed)
        self.n = config.n
        self.horizon = config.horizon
        self.params = make_gen_params(config, seed)
        self._reset()

    def _reset(self) -> None:
        p = self.params
        self._a_state = np.zeros(self.n, dtype=np.int8)
        self._c_state = np.zeros((self.n, self.n), dtype=np.int8)
        init_chain_states(p.seedmix, p.akind, p.a_pi0, self._a_state,
                          p.ckind, p.c_pin, p.c_pif, self._c_state)
        self._a_cursor = 0
        self._c_cursor = 0

    def _check_slot(self, t: int) -> None:
        if not (0 <= t < self.horizon):
            raise IndexError(f"slot {t} outside horizon [0, {self.horizon})")

    def arrivals(self, t: int) -> np.ndarray:
        """Arrival counts per queue at slot t (int64[n])."""
        self._check_slot(t)
        p = self.params
        out = np.empty(self.n, dtype=np.int64)
        if p.akind == ARR_IID:
            gen_arrivals(p.seedmix, t, p.akind, p.a_thr, p.a_amount, p.a_trans,
                         self._a_state, out)
            return out
        if t < self._a_cursor:
            self._reset()
        while self._a_cursor < t:
            gen_arrivals(p.seedmix, self._a_cursor, p.akind, p.a_thr, p.a_amount,
                         p.a_trans, self._a_state, out)
            self._a_cursor += 1
        gen_arrivals(p.seedmix, t, p.akind, p.a_thr, p.a_amount, p.a_trans,
                     self._a_state, out)
        self._a_cursor = t + 1
        return out

    def connectivity(self, t: int) -> np.ndarray:
        """Connectivity matrix at slot t (uint8[n, n], rows=queues, cols=servers)."""
        self._check_slot(t)
        p = self.params
        out = np.empty((self.n, self.n), dtype=np.uint8)
        if p.ckind == CHAN_IID:
            gen_conn(p.seedmix, t, p.ckind, p.c_thr, p.c_bits, p.c_m,
                     p.c_near, p.c_far, self._c_state, out)
            return out
        if t < self._c_cursor:
            self._reset()
            # arrivals cursor was reset too; arrivals() replays on demand
        while self._c_cursor < t:
            gen_conn(p.seedmix, self._c_cursor, p.ckind, p.c_thr, p.c_bits, p.c_m,
                     p.c_near, p.c_far, self._c_state, out)
            self._c_cursor += 1
        gen_conn(p.seedmix, t, p.ckind, p.c_thr, p.c_bits, p.c_m,
                 p.c_near, p.c_far, self._c_state, out)
        self._c_cursor = t + 1
        return out

    def materialize(self, max_bytes: int = 1 << 30):
        """Return (arrivals[horizon, n], conn[horizon, n, n]) for small paths."""
        need = self.horizon * self.n * (8 + self.n)
        if need > max_bytes:
            raise MemoryError(f"materializing would need ~{need} bytes > {max_bytes}")
        arr = np.empty((self.horizon, self.n), dtype=np.int64)
        conn = np.empty((self.horizon, self.n, self.n), dtype=np.uint8)
        self._reset()
        for t in range(self.horizon):
            arr[t] = self.arrivals(t)
            conn[t] = self.connectivity(t)
        return arr, conn


def generate_sample_path(config: ModelConfig, seed: int) -> SamplePath:
    """Build a reproducible sample path; deterministic in (config, seed)."""
    return SamplePath(config, seed)

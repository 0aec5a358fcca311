"""Scheduling policies behind a single interface.

Every policy maps (SystemState, slot connectivity) to a schedule; the greedy
and matching-based ones are stateless wrappers over jitted kernels, while the
frame-based analysis policy keeps persistent frame state across slots.
"""
from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .engine import Schedule, SystemState
from .model import ConfigError, Packet

POLICY_NAMES = ("dssg", "dqsg", "dmws", "qssg", "gfbs", "dwm", "dwmn", "hybrid")


class Policy:
    """Deterministic function of (state, connectivity); G-FBS also threads its
    persistent FrameState."""

    name: str = "?"
    jit_code: int | None = None

    def schedule_arrays(self, state: SystemState, conn: np.ndarray):
        raise NotImplementedError

    def schedule(self, state: SystemState, conn: np.ndarray) -> Schedule:
        serve, _ops = self.schedule_arrays(state, conn)
        return Schedule.from_serve_array(state, serve)

    def reset(self) -> None:
        pass


class KernelPolicy(Policy):
    def __init__(self, name: str):
        self.name = name
        self.jit_code = kernels.POLICY_CODES[name]

    def schedule_arrays(self, state: SystemState, conn: np.ndarray):
        serve = np.empty(state.n, dtype=np.int64)
        ops = kernels.dispatch_kernel(self.jit_code, state.buf, state.head,
                                      state.qlen, state.slot,
                                      np.ascontiguousarray(conn), state.aidx, serve)
        return serve, int(ops)


# ---------------------------------------------------------------------------
# G-FBS: frames, L-frame, S-frame, success events
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class GfbsDimensions:
    """Derived frame geometry for a system size.

    H = L*h bounds packets per queue per frame; frames hold n0 = n - ceil(H*sqrt(n))
    packets; the leftover frame holds n - n0; the success event must cover the
    f oldest packets of the S-frame.
    """

    n: int
    L: int
    h: int
    H: int
    hs: int
    n0: int
    l_cap: int
    f: int
    strict: bool


def gfbs_dimensions(n: int, L: int, h: int, f_exponent: float = 0.75,
                    strict: bool = True) -> GfbsDimensions:
    if h < 1:
        raise ConfigError(f"h must be >= 1, got {h}")
    if not (0.5 < f_exponent < 1.0):
        raise ConfigError("f_exponent must lie in (0.5, 1) so f is in "
                          "omega(sqrt(n)) and o(n/log^2 n)")
    H = L * h
    hs = math.ceil(H * math.sqrt(n))
    if strict:
        if not (hs < n / 2):
            raise ConfigError(
                f"infeasible G-FBS geometry: ceil(H*sqrt(n)) = {hs} must be < n/2 = {n / 2}"
                f" (n={n}, L={L}, h={h}); increase n or decrease h")
        n0 = n - hs
    else:
        n0 = max(1, n - hs)
    caps = [math.ceil(n ** f_exponent), max(1, math.ceil(n / 2) - 1)]
    if n - hs - 1 >= 1:
        caps.append(n - hs - 1)
    f = max(1, min(caps))
    return GfbsDimensions(n=n, L=L, h=h, H=H, hs=hs, n0=n0, l_cap=n - n0,
                          f=f, strict=strict)


@dataclass
class Frame:
    first_slot: int
    packets: list[Packet] = field(default_factory=list)
    per_queue: dict[int, int] = field(default_factory=dict)


@dataclass
class FrameState:
    """Persistent G-FBS bookkeeping.

    ``f_rec``/``r_rec`` are the recursion-defined frame counters (updated each
    slot from arrivals and the success indicator); the frame deque and l_frame
    are the actual structures that drive scheduling.  ``last`` holds the most
    recent slot's A/M/P/D/X_F values for verification.
    """

    dims: GfbsDimensions
    frames: deque = field(default_factory=deque)
    l_frame: list[Packet] = field(default_factory=list)
    f_rec: int = 0
    r_rec: int = 0
    slots_weighted: int = 0
    successes_weighted: int = 0
    last: dict = field(default_factory=dict)

    def clone(self) -> "FrameState":
        fs = FrameState(self.dims)
        fs.frames = deque(Frame(fr.first_slot, list(fr.packets), dict(fr.per_queue))
                          for fr in self.frames)
        fs.l_frame = list(self.l_frame)
        fs.f_rec, fs.r_rec = self.f_rec, self.r_rec
        fs.slots_weighted = self.slots_weighted
        fs.successes_weighted = self.successes_weighted
        fs.last = dict(self.last)
        return fs

    def actual_frame_count(self) -> int:
        return len(self.frames)

    def actual_eol_space(self) -> int:
        if not self.frames:
            return 0
        return self.dims.n0 - len(self.frames[-1].packets)


def _fill_frames(fs: FrameState, new_packets: list[Packet]) -> None:
    """FCFS fill: earlier slots first, smaller queue index first within a slot;
    a frame closes when capacity n0, the per-queue cap H, or the delay span h
    would be violated."""
    d = fs.dims
    for p in new_packets:
        fr = fs.frames[-1] if fs.frames else None
        if (fr is None
                or len(fr.packets) >= d.n0
                or fr.per_queue.get(p.queue_id, 0) >= d.H
                or p.arrival_slot - fr.first_slot > d.h):
            fr = Frame(first_slot=p.arrival_slot)
            fs.frames.append(fr)
        fr.packets.append(p)
        fr.per_queue[p.queue_id] = fr.per_queue.get(p.queue_id, 0) + 1


class GfbsError(RuntimeError):
    """FrameState invariant violation (internal bug)."""


def gfbs_schedule_step(state: SystemState, conn: np.ndarray, fs: FrameState):
    """One G-FBS slot: fill frames, form the S-frame (l_frame + HOL frame +
    dummy padding to exactly n), run the server-side greedy restricted to the
    S-frame, declare success, serve/move/discard, update counters.

    Mutates ``fs``; returns (serve array over real packets, ops, diagnostics).
    """
    d = fs.dims
    n, aidx, t = state.n, state.aidx, state.slot
    new_packets = state.arrivals_this_slot()
    a_t = len(new_packets)
    _fill_frames(fs, new_packets)

    m_t = len(fs.l_frame)
    hol = fs.frames[0] if fs.frames else None
    p_t = len(hol.packets) if hol else 0
    real = fs.l_frame + (list(hol.packets) if hol else [])

    per_q = np.zeros(n + 1, dtype=np.int64)
    for p in real:
        per_q[p.queue_id] += 1
    if d.strict and per_q.max(initial=0) > 2 * d.H:
        raise GfbsError(f"S-frame holds {per_q.max()} packets from one queue > 2H={2 * d.H}")

    # entries: (queue_id, pid, is_real); dummies have delay zero and rank last
    entries = [(p.queue_id, p.arrival_slot * aidx + (p.arrival_index - 1), True)
               for p in real]
    qid = 1
    scanned = 0
    dummy_pid = t * aidx
    while len(entries) < n and scanned < 2 * n * (2 * d.H + 1):
        if per_q[qid] < 2 * d.H:
            entries.append((qid, dummy_pid, False))
            per_q[qid] += 1
        qid = qid % n + 1
        scanned += 1
    if len(entries) != n:
        raise GfbsError("could not pad the S-frame to n entries")

    # virtual queues in S-frame order (l_frame, HOL frame, dummies: oldest first)
    vqlen = np.zeros(n, dtype=np.int64)
    entry_pos = np.empty(len(entries), dtype=np.int64)
    for e, (q, _pid, _r) in enumerate(entries):
        entry_pos[e] = vqlen[q - 1]
        vqlen[q - 1] += 1
    cap = max(1, int(vqlen.max()))
    vbuf = np.zeros((n, cap), dtype=np.int64)
    fill = np.zeros(n, dtype=np.int64)
    for (q, pid, _r) in entries:
        vbuf[q - 1, fill[q - 1]] = pid
        fill[q - 1] += 1
    vhead = np.zeros(n, dtype=np.int64)
    vserve = np.empty(n, dtype=np.int64)
    ops = kernels.dssg_kernel(vbuf, vhead, vqlen, t, np.ascontiguousarray(conn),
                              aidx, vserve)

    served_per_q = np.zeros(n, dtype=np.int64)
    scheduled_total = 0
    for j in range(n):
        if vserve[j] >= 0:
            served_per_q[vserve[j]] += 1
            scheduled_total += 1
    oldest_covered = all(
        entry_pos[e] < served_per_q[entries[e][0] - 1] for e in range(d.f))
    success = scheduled_total >= d.n0 and oldest_covered

    serve = np.full(n, -1, dtype=np.int64)
    d_t = 0
    if success:
        reals_per_q = np.zeros(n, dtype=np.int64)
        for (q, _pid, is_real) in entries:
            if is_real:
                reals_per_q[q - 1] += 1
        consumed = np.zeros(n, dtype=np.int64)
        for j in range(n):
            i = vserve[j]
            if i >= 0:
                if consumed[i] < reals_per_q[i]:
                    serve[j] = i
                    d_t += 1
                consumed[i] += 1
        leftovers = [real[e] for e in range(len(real))
                     if entry_pos[e] >= served_per_q[entries[e][0] - 1]]
        if len(leftovers) > d.l_cap:
            raise GfbsError(f"{len(leftovers)} leftovers exceed the L-frame "
                            f"capacity {d.l_cap}")
        if hol is not None:
            fs.frames.popleft()
        fs.l_frame = leftovers

    x_f = 1 if success else 0
    new_frames = -((-(a_t - fs.r_rec)) // d.n0)  # ceil((A - R)/n0), >= 0 as R < n0
    fs.f_rec = max(fs.f_rec + new_frames - x_f, 0)
    fs.r_rec = ((fs.r_rec - a_t) % d.n0) if fs.f_rec > 0 else 0
    if m_t + p_t > 0:
        fs.slots_weighted += 1
        fs.successes_weighted += x_f
    fs.last = {"A": a_t, "M": m_t, "P": p_t, "D": d_t, "X_F": x_f,
               "scheduled": scheduled_total, "success": success}
    return serve, int(ops), fs.last


class GFBS(Policy):
    """Greedy frame-based scheduling; an analysis policy, not a practical one.

    ``strict=False`` clamps the geometry (n0 >= 1) so the policy is runnable at
    sizes where ceil(H*sqrt(n)) >= n/2; dominance over the server-side greedy
    holds for any h either way.
    """

    name = "gfbs"
    jit_code = None

    def __init__(self, h: int = 5, f_exponent: float = 0.75, strict: bool = True,
                 n: int | None = None, L: int | None = None):
        self.h = h
        self.f_exponent = f_exponent
        self.strict = strict
        self.dims: GfbsDimensions | None = None
        if n is not None and L is not None:
            self.dims = gfbs_dimensions(n, L, h, f_exponent, strict)
        self.fs: FrameState | None = FrameState(self.dims) if self.dims else None

    def reset(self) -> None:
        self.fs = FrameState(self.dims) if self.dims else None

    def schedule_arrays(self, state: SystemState, conn: np.ndarray):
        if self.dims is None:
            self.dims = gfbs_dimensions(state.n, state.aidx - 1, self.h,
                                        self.f_exponent, self.strict)
        if self.fs is None:
            self.fs = FrameState(self.dims)
        serve, ops, _diag = gfbs_schedule_step(state, conn, self.fs)
        return serve, ops


def make_policy(name: str, **params) -> Policy:
    """Construct a policy by its CLI name."""
    if name == "gfbs":
        return GFBS(**params)
    if name not in kernels.POLICY_CODES:
        raise ConfigError(f"unknown policy {name!r}; valid: {', '.join(POLICY_NAMES)}")
    if params:
        raise ConfigError(f"policy {name!r} takes no parameters")
    return KernelPolicy(name)


# Operation-style entry points mirroring the policy map.

def schedule_dssg(state, conn) -> Schedule:
    return KernelPolicy("dssg").schedule(state, conn)


def schedule_dqsg(state, conn) -> Schedule:
    return KernelPolicy("dqsg").schedule(state, conn)


def schedule_dmws(state, conn) -> Schedule:
    return KernelPolicy("dmws").schedule(state, conn)


def schedule_qssg(state, conn) -> Schedule:
    return KernelPolicy("qssg").schedule(state, conn)


def schedule_dwm(state, conn) -> Schedule:
    return KernelPolicy("dwm").schedule(state, conn)


def schedule_dwmn(state, conn) -> Schedule:
    return KernelPolicy("dwmn").schedule(state, conn)


def schedule_hybrid(state, conn) -> Schedule:
    return KernelPolicy("hybrid").schedule(state, conn)


def schedule_gfbs(state, conn, fs: FrameState):
    """Functional form: returns (Schedule, new FrameState) without mutating fs."""
    fs2 = fs.clone()
    serve, _ops, _diag = gfbs_schedule_step(state, conn, fs2)
    return Schedule.from_serve_array(state, serve), fs2

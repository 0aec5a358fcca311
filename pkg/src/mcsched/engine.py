"""Discrete-time slot loop: arrivals at slot start, scheduling, departures at
slot end, with delay-violation and queue-length accounting.

W(t) and queue lengths are sampled once per slot from the post-arrival,
pre-service state (the "beginning of time-slot t immediately after packet
arrivals" convention), so the empirical P(W(0) > b) matches the delay-violation
event being estimated.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .model import ModelConfig, Packet, SamplePath, packet_age_key

DEFAULT_ABORT_CAP = 10_000_000


class ScheduleError(ValueError):
    """A policy produced a schedule violating the schedule invariants."""


class EngineError(ValueError):
    pass


class SystemState:
    """n FIFO queues of packets plus the current slot.

    Storage is the kernel layout (packed pids in growable slabs); accessors
    expose 1-based queue ids and Packet objects for inspection and tests.
    """

    def __init__(self, n: int, max_arrivals_per_slot: int, slot: int = 0):
        if n < 1 or max_arrivals_per_slot < 1:
            raise EngineError("n and max_arrivals_per_slot must be >= 1")
        self.n = n
        self.aidx = max_arrivals_per_slot + 1
        self.slot = slot
        self.buf = np.zeros((n, 64), dtype=np.int64)
        self.head = np.zeros(n, dtype=np.int64)
        self.qlen = np.zeros(n, dtype=np.int64)
        self.arrived_total = 0
        self.departed_total = 0
        self.departed_per_queue = np.zeros(n, dtype=np.int64)

    # -- accessors (1-based queue ids) --------------------------------------

    def queue_len(self, queue_id: int) -> int:
        return int(self.qlen[queue_id - 1])

    def total_backlog(self) -> int:
        return int(self.qlen.sum())

    def packet_at(self, queue_id: int, l: int) -> Packet:
        """l-th packet of the queue, 1-based from the head."""
        i = queue_id - 1
        if not (1 <= l <= self.qlen[i]):
            raise IndexError(f"queue {queue_id} has {self.qlen[i]} packets, asked for {l}")
        pid = int(self.buf[i, self.head[i] + l - 1])
        return Packet(pid // self.aidx, queue_id, pid % self.aidx + 1)

    def packets(self, queue_id: int) -> list[Packet]:
        return [self.packet_at(queue_id, l) for l in range(1, self.queue_len(queue_id) + 1)]

    def packet_delay(self, queue_id: int, l: int) -> int:
        """Z_{i,l}(t): delay of the l-th packet."""
        return self.slot - self.packet_at(queue_id, l).arrival_slot

    def hol_delay(self, queue_id: int) -> int:
        """W_i(t): delay of the head packet, 0 for an empty queue."""
        i = queue_id - 1
        if self.qlen[i] == 0:
            return 0
        return self.slot - int(self.buf[i, self.head[i]]) // self.aidx

    def w_max(self) -> int:
        """W(t) = max_i W_i(t), the age of the globally oldest packet."""
        return max((self.hol_delay(i) for i in range(1, self.n + 1)), default=0)

    def arrivals_this_slot(self) -> list[Packet]:
        """Packets that arrived at the current slot, in (queue, index) order."""
        out = []
        for qid in range(1, self.n + 1):
            i = qid - 1
            pos = self.head[i] + self.qlen[i] - 1
            tail = []
            while pos >= self.head[i]:
                pid = int(self.buf[i, pos])
                if pid // self.aidx != self.slot:
                    break
                tail.append(Packet(self.slot, qid, pid % self.aidx + 1))
                pos -= 1
            out.extend(reversed(tail))
        return out

    # -- mutation ------------------------------------------------------------

    def append_arrivals(self, counts: np.ndarray) -> None:
        if counts.max(initial=0) >= self.aidx:
            raise EngineError("arrival count exceeds the configured per-slot bound")
        self.buf = kernels.append_arrivals(self.buf, self.head, self.qlen,
                                           np.asarray(counts, dtype=np.int64),
                                           self.slot, self.aidx)
        self.arrived_total += int(counts.sum())

    def add_packets(self, packets: list[Packet]) -> None:
        """Test helper: load an arbitrary backlog (validated, FIFO-sorted)."""
        for p in sorted(packets, key=packet_age_key):
            if p.arrival_slot > self.slot:
                raise EngineError(f"{p} arrives after current slot")
            if not (1 <= p.queue_id <= self.n):
                raise EngineError(f"{p} has queue_id outside [1, {self.n}]")
            if not (1 <= p.arrival_index < self.aidx):
                raise EngineError(f"{p} has arrival_index outside [1, {self.aidx - 1}]")
            i = p.queue_id - 1
            self.buf = kernels.ensure_capacity(self.buf, self.head, self.qlen, i, 1)
            self.buf[i, self.head[i] + self.qlen[i]] = \
                p.arrival_slot * self.aidx + (p.arrival_index - 1)
            self.qlen[i] += 1
            self.arrived_total += 1

    def apply_serve(self, serve: np.ndarray) -> int:
        d = kernels.apply_service(self.head, self.qlen, serve)
        for j in range(self.n):
            if serve[j] >= 0:
                self.departed_per_queue[serve[j]] += 1
        self.departed_total += int(d)
        return int(d)

    def clone(self) -> "SystemState":
        other = SystemState(self.n, self.aidx - 1, self.slot)
        other.buf = self.buf.copy()
        other.head = self.head.copy()
        other.qlen = self.qlen.copy()
        other.arrived_total = self.arrived_total
        other.departed_total = self.departed_total
        other.departed_per_queue = self.departed_per_queue.copy()
        return other


@dataclass
class Schedule:
    """Per-slot map server -> (queue_id, packet); absent servers idle."""

    assignments: dict[int, tuple[int, Packet]]

    @classmethod
    def from_serve_array(cls, state: SystemState, serve: np.ndarray) -> "Schedule":
        """Assign each queue's scheduled servers (ascending) its oldest packets."""
        taken: dict[int, int] = {}
        assignments = {}
        for j in range(state.n):
            i = int(serve[j])
            if i < 0:
                continue
            l = taken.get(i, 0) + 1
            taken[i] = l
            assignments[j + 1] = (i + 1, state.packet_at(i + 1, l))
        return cls(assignments)

    def validate(self, state: SystemState, conn: np.ndarray) -> None:
        seen_packets = set()
        per_queue: dict[int, list[Packet]] = {}
        for server, (qid, pkt) in self.assignments.items():
            if not (1 <= server <= state.n):
                raise ScheduleError(f"server {server} out of range")
            if conn[qid - 1, server - 1] == 0:
                raise ScheduleError(f"server {server} not connected to queue {qid}")
            if pkt in seen_packets:
                raise ScheduleError(f"packet {pkt} scheduled twice")
            seen_packets.add(pkt)
            per_queue.setdefault(qid, []).append(pkt)
        for qid, pkts in per_queue.items():
            oldest = state.packets(qid)[: len(pkts)]
            if sorted(pkts, key=packet_age_key) != oldest:
                raise ScheduleError(
                    f"queue {qid}: scheduled packets are not its {len(pkts)} oldest")


@dataclass
class MetricsAccumulator:
    """Post-warmup delay-violation and queue-length statistics for one run."""

    warmup: int
    thresholds: tuple[int, ...]
    violation_counts: dict[int, int] = field(default_factory=dict)
    slot_samples: int = 0
    queue_length_sum: int = 0
    op_counter_max: int = 0
    arrived: int = 0
    departed: int = 0
    in_system: int = 0
    aborted: bool = False
    stop_slot: int = 0
    queue_totals: np.ndarray | None = None

    def __post_init__(self) -> None:
        self.thresholds = tuple(sorted(int(b) for b in self.thresholds))
        for b in self.thresholds:
            self.violation_counts.setdefault(b, 0)

    def observe(self, w: int, qtot: int) -> None:
        self.slot_samples += 1
        self.queue_length_sum += qtot
        for b in self.thresholds:
            if w > b:
                self.violation_counts[b] += 1

    def prob(self, b: int) -> float:
        if self.slot_samples == 0:
            return float("nan")
        return self.violation_counts[b] / self.slot_samples

    def mean_total_queue_length(self) -> float:
        if self.slot_samples == 0:
            return float("nan")
        return self.queue_length_sum / self.slot_samples


def step(state: SystemState, path: SamplePath, policy, metrics: MetricsAccumulator,
         verify: bool = False) -> SystemState:
    """Advance one slot: arrivals, statistics, scheduling, departures.

    In verify mode every schedule is validated against the schedule invariants
    and conservation is checked, which is how policy bugs surface.
    """
    t = state.slot
    if t >= path.horizon:
        raise EngineError(f"slot {t} beyond horizon {path.horizon}")
    state.append_arrivals(path.arrivals(t))
    if t >= metrics.warmup:
        metrics.observe(state.w_max(), state.total_backlog())
    conn = path.connectivity(t)
    serve, ops = policy.schedule_arrays(state, conn)
    metrics.op_counter_max = max(metrics.op_counter_max, int(ops))
    if verify:
        Schedule.from_serve_array(state, serve).validate(state, conn)
    state.apply_serve(serve)
    if verify and state.arrived_total != state.departed_total + state.total_backlog():
        raise EngineError("conservation violated: arrived != departed + in system")
    state.slot = t + 1
    return state


def run(path: SamplePath, policy, warmup: int, thresholds,
        verify: bool = False, abort_cap: int = DEFAULT_ABORT_CAP,
        record_queue_totals: bool = False, force_python: bool = False) -> MetricsAccumulator:
    """Run a full horizon and return accumulated statistics.

    Dispatches to the fused jitted loop when the policy is stateless and no
    verification or recording hooks are needed; results are identical either
    way (covered by a differential test).
    """
    if warmup >= path.horizon:
        raise EngineError(f"warmup {warmup} leaves no sample slots in horizon {path.horizon}")
    if warmup < 0:
        raise EngineError("warmup must be >= 0")
    thresholds = tuple(sorted(int(b) for b in thresholds))
    metrics = MetricsAccumulator(warmup=warmup, thresholds=thresholds)
    jit_code = getattr(policy, "jit_code", None)
    if jit_code is not None and not verify and not force_python:
        p = path.params
        qtot_out = np.empty(path.horizon if record_queue_totals else 0, dtype=np.int64)
        (viol, samples, qsum, ops_max, arrived, departed, in_system,
         aborted, stop_slot) = kernels.run_sim(
            p.seedmix, p.n, path.horizon, warmup,
            p.akind, p.a_thr, p.a_amount, p.a_trans, p.a_pi0,
            p.ckind, p.c_thr, p.c_bits, p.c_m, p.c_near, p.c_far, p.c_pin, p.c_pif,
            jit_code, path.config.max_arrivals_per_slot + 1,
            np.asarray(thresholds, dtype=np.int64), abort_cap, qtot_out)
        for k, b in enumerate(thresholds):
            metrics.violation_counts[b] = int(viol[k])
        metrics.slot_samples = int(samples)
        metrics.queue_length_sum = int(qsum)
        metrics.op_counter_max = int(ops_max)
        metrics.arrived, metrics.departed, metrics.in_system = \
            int(arrived), int(departed), int(in_system)
        metrics.aborted = bool(aborted)
        metrics.stop_slot = int(stop_slot)
        if record_queue_totals:
            metrics.queue_totals = qtot_out[:metrics.stop_slot]
        return metrics

    state = SystemState(path.n, path.config.max_arrivals_per_slot)
    if hasattr(policy, "reset"):
        policy.reset()
    qtots = [] if record_queue_totals else None
    stop_slot = path.horizon
    for t in range(path.horizon):
        state.append_arrivals(path.arrivals(t))
        if state.arrived_total - state.departed_total > abort_cap:
            metrics.aborted = True
            stop_slot = t
            break
        if qtots is not None:
            qtots.append(state.total_backlog())
        if t >= warmup:
            metrics.observe(state.w_max(), state.total_backlog())
        conn = path.connectivity(t)
        serve, ops = policy.schedule_arrays(state, conn)
        metrics.op_counter_max = max(metrics.op_counter_max, int(ops))
        if verify:
            Schedule.from_serve_array(state, serve).validate(state, conn)
        state.apply_serve(serve)
        state.slot = t + 1
    metrics.arrived = state.arrived_total
    metrics.departed = state.departed_total
    metrics.in_system = state.total_backlog()
    metrics.stop_slot = stop_slot
    if qtots is not None:
        metrics.queue_totals = np.asarray(qtots, dtype=np.int64)
    return metrics

"""Jitted state layout and per-slot scheduling kernels.

Queue state is n growable FIFO slabs of packed packet ids:
``pid = arrival_slot * aidx + (arrival_index - 1)`` with ``aidx`` one more than
the per-slot arrival bound, so age and arrival index are recoverable and FIFO
order within a queue equals ascending pid.

Every kernel reads state without mutating it and writes ``serve[j] = queue``
(0-based, -1 idle) for server j; departures are applied separately by popping
queue heads.  Weight-based kernels pack (delay, n+1-queue, L+1-index) into one
int64 so lexicographic totals compare exactly.
"""
from __future__ import annotations

import numpy as np
from numba import njit

from . import rng
from .model import gen_arrivals, gen_conn, init_chain_states

POL_DSSG = 0
POL_DQSG = 1
POL_DMWS = 2
POL_QSSG = 3
POL_DWM = 4
POL_DWMN = 5
POL_HYBRID = 6

POLICY_CODES = {
    "dssg": POL_DSSG,
    "dqsg": POL_DQSG,
    "dmws": POL_DMWS,
    "qssg": POL_QSSG,
    "dwm": POL_DWM,
    "dwmn": POL_DWMN,
    "hybrid": POL_HYBRID,
}


# ---------------------------------------------------------------------------
# Queue slabs
# ---------------------------------------------------------------------------

@njit(cache=True)
def ensure_capacity(buf, head, qlen, i, extra):
    """Make room for ``extra`` more packets in queue i; may return a new buf."""
    cap = buf.shape[1]
    if head[i] + qlen[i] + extra <= cap:
        return buf
    if qlen[i] + extra <= cap:
        h = head[i]
        for k in range(qlen[i]):
            buf[i, k] = buf[i, h + k]
        head[i] = 0
        return buf
    newcap = cap
    while qlen[i] + extra > newcap:
        newcap *= 2
    nb = np.empty((buf.shape[0], newcap), dtype=np.int64)
    for r in range(buf.shape[0]):
        h = head[r]
        for k in range(qlen[r]):
            nb[r, k] = buf[r, h + k]
        head[r] = 0
    return nb


@njit(cache=True)
def append_arrivals(buf, head, qlen, counts, t, aidx):
    """Append slot-t arrivals at queue tails in arrival-index order."""
    n = counts.shape[0]
    base = t * aidx
    for i in range(n):
        c = counts[i]
        if c == 0:
            continue
        buf = ensure_capacity(buf, head, qlen, i, c)
        p = head[i] + qlen[i]
        for x in range(c):
            buf[i, p + x] = base + x
        qlen[i] += c
    return buf


@njit(cache=True)
def apply_service(head, qlen, serve):
    """Pop one head packet per assigned server; returns packets departed."""
    departed = 0
    for j in range(serve.shape[0]):
        i = serve[j]
        if i >= 0:
            head[i] += 1
            qlen[i] -= 1
            departed += 1
    return departed


@njit(cache=True, inline="always")
def hol_age(buf, head, qlen, slot, aidx, i):
    if qlen[i] == 0:
        return np.int64(-1)
    return slot - buf[i, head[i]] // aidx


# ---------------------------------------------------------------------------
# Greedy kernels
# ---------------------------------------------------------------------------

@njit(cache=True)
def dssg_kernel(buf, head, qlen, slot, conn, aidx, serve):
    """Server-side greedy by HOL delay, servers in index order, inter-round
    HOL updates, ties to the smallest queue index.  Returns the basic-operation
    count: n delay refreshes + per round n connectivity checks, at most n
    weight comparisons and one HOL update, which stays within 2n^2 + 2n.
    """
    n = qlen.shape[0]
    w = np.empty(n, dtype=np.int64)
    srv = np.zeros(n, dtype=np.int64)
    ops = np.int64(n)
    for i in range(n):
        w[i] = hol_age(buf, head, qlen, slot, aidx, i)
    for k in range(n):
        best = np.int64(-1)
        best_i = -1
        for i in range(n):
            ops += 1
            if conn[i, k] != 0 and w[i] >= 0:
                ops += 1
                if w[i] > best:
                    best = w[i]
                    best_i = i
        if best_i >= 0:
            serve[k] = best_i
            s = srv[best_i] + 1
            srv[best_i] = s
            ops += 1
            if s < qlen[best_i]:
                w[best_i] = slot - buf[best_i, head[best_i] + s] // aidx
            else:
                w[best_i] = -1
        else:
            serve[k] = -1
    return ops


@njit(cache=True)
def dqsg_kernel(buf, head, qlen, slot, conn, aidx, serve):
    """Queue-side greedy: rounds pick the largest-HOL queue having an available
    connected server (ties to smallest queue index), then the smallest-index
    such server; HOL updated between rounds."""
    n = qlen.shape[0]
    w = np.empty(n, dtype=np.int64)
    srv = np.zeros(n, dtype=np.int64)
    avail = np.ones(n, dtype=np.uint8)
    for i in range(n):
        w[i] = hol_age(buf, head, qlen, slot, aidx, i)
    serve[:] = -1
    for _ in range(n):
        best = np.int64(-1)
        best_i = -1
        for i in range(n):
            if w[i] > best:
                for j in range(n):
                    if avail[j] != 0 and conn[i, j] != 0:
                        best = w[i]
                        best_i = i
                        break
        if best_i < 0:
            break
        jj = -1
        for j in range(n):
            if avail[j] != 0 and conn[best_i, j] != 0:
                jj = j
                break
        serve[jj] = best_i
        avail[jj] = 0
        s = srv[best_i] + 1
        srv[best_i] = s
        if s < qlen[best_i]:
            w[best_i] = slot - buf[best_i, head[best_i] + s] // aidx
        else:
            w[best_i] = -1
    return np.int64(0)


@njit(cache=True)
def dmws_kernel(buf, head, qlen, slot, conn, aidx, serve):
    """Uncoordinated per-server max-HOL rule: every server independently picks
    the connected nonempty queue with the largest slot-start HOL delay (ties to
    the smallest index); a queue piled on by k servers serves min(k, Q_i)."""
    n = qlen.shape[0]
    w = np.empty(n, dtype=np.int64)
    taken = np.zeros(n, dtype=np.int64)
    for i in range(n):
        w[i] = hol_age(buf, head, qlen, slot, aidx, i)
    for j in range(n):
        best = np.int64(-1)
        best_i = -1
        for i in range(n):
            if conn[i, j] != 0 and w[i] >= 0 and w[i] > best:
                best = w[i]
                best_i = i
        if best_i >= 0 and taken[best_i] < qlen[best_i]:
            serve[j] = best_i
            taken[best_i] += 1
        else:
            serve[j] = -1
    return np.int64(0)


@njit(cache=True)
def qssg_kernel(buf, head, qlen, slot, conn, aidx, serve):
    """D-SSG's iterative structure with remaining queue length as the weight."""
    n = qlen.shape[0]
    rem = qlen.copy()
    for k in range(n):
        best = np.int64(0)
        best_i = -1
        for i in range(n):
            if conn[i, k] != 0 and rem[i] > best:
                best = rem[i]
                best_i = i
        if best_i >= 0:
            serve[k] = best_i
            rem[best_i] -= 1
        else:
            serve[k] = -1
    return np.int64(0)


# ---------------------------------------------------------------------------
# Matching-based kernels (DWM, DWM-n, hybrid stage 1)
# ---------------------------------------------------------------------------

@njit(cache=True)
def collect_candidates(buf, head, qlen, slot, aidx, keys, qidx):
    """Gather the min(Q_i, n) oldest packets of every queue.

    Emits a unique age key per packet (ascending key = older packet = larger
    scheduling weight); returns the candidate count.
    """
    n = qlen.shape[0]
    m = 0
    for i in range(n):
        k = qlen[i] if qlen[i] < n else n
        h = head[i]
        for s in range(k):
            keys[m] = buf[i, h + s] * n + i
            qidx[m] = i
            m += 1
    return m


@njit(cache=True)
def kuhn_match(order, nrows, cand_q, conn, n, col_match, visited, stamp0,
               row_stack, next_j, col_at):
    """Augmenting-path matching, candidates processed oldest-first.

    Weights live only on packets (ŵ is strictly positive and unique), so
    inserting candidates in descending-weight order and keeping every earlier
    match yields the maximum-lexicographic-weight matching; alternating-path
    reassignments never change the total.  Returns the number matched.
    """
    matched = 0
    stamp = stamp0
    for r in range(nrows):
        row = order[r]
        stamp += 1
        lvl = 0
        row_stack[0] = row
        next_j[0] = 0
        while lvl >= 0:
            u = row_stack[lvl]
            qu = cand_q[u]
            j = next_j[lvl]
            descended = False
            while j < n:
                if conn[qu, j] != 0 and visited[j] != stamp:
                    visited[j] = stamp
                    next_j[lvl] = j + 1
                    col_at[lvl] = j
                    occupant = col_match[j]
                    if occupant < 0:
                        for k in range(lvl, -1, -1):
                            col_match[col_at[k]] = row_stack[k]
                        matched += 1
                        lvl = -2
                        descended = True
                        break
                    lvl += 1
                    row_stack[lvl] = occupant
                    next_j[lvl] = 0
                    descended = True
                    break
                j += 1
            if not descended:
                lvl -= 1
    return matched


@njit(cache=True)
def matching_kernel(buf, head, qlen, slot, conn, aidx, serve, top_n_only):
    """DWM / DWM-n: maximum-weight matching between candidate packets and
    servers, weight = packet delay with the unique-age tiebreak."""
    n = qlen.shape[0]
    cap = 0
    for i in range(n):
        cap += qlen[i] if qlen[i] < n else n
    keys = np.empty(cap, dtype=np.int64)
    qidx = np.empty(cap, dtype=np.int64)
    m = collect_candidates(buf, head, qlen, slot, aidx, keys, qidx)
    order = np.argsort(keys[:m])
    nrows = m
    if top_n_only and nrows > n:
        nrows = n
    col_match = np.full(n, -1, dtype=np.int64)
    visited = np.zeros(n, dtype=np.int64)
    row_stack = np.empty(n + 1, dtype=np.int64)
    next_j = np.empty(n + 1, dtype=np.int64)
    col_at = np.empty(n + 1, dtype=np.int64)
    kuhn_match(order, nrows, qidx, conn, n, col_match, visited, 0,
               row_stack, next_j, col_at)
    for j in range(n):
        serve[j] = qidx[col_match[j]] if col_match[j] >= 0 else -1
    return np.int64(0)


@njit(cache=True)
def hybrid_kernel(buf, head, qlen, slot, conn, aidx, serve):
    """Stage 1: DWM-n.  Stage 2: every still-idle server applies the D-MWS rule
    to the residual queues left by stage 1."""
    n = qlen.shape[0]
    matching_kernel(buf, head, qlen, slot, conn, aidx, serve, True)
    served = np.zeros(n, dtype=np.int64)
    for j in range(n):
        if serve[j] >= 0:
            served[serve[j]] += 1
    w_res = np.empty(n, dtype=np.int64)
    for i in range(n):
        s = served[i]
        if s < qlen[i]:
            w_res[i] = slot - buf[i, head[i] + s] // aidx
        else:
            w_res[i] = -1
    extra = np.zeros(n, dtype=np.int64)
    for j in range(n):
        if serve[j] >= 0:
            continue
        best = np.int64(-1)
        best_i = -1
        for i in range(n):
            if conn[i, j] != 0 and w_res[i] >= 0 and w_res[i] > best:
                best = w_res[i]
                best_i = i
        if best_i >= 0 and served[best_i] + extra[best_i] < qlen[best_i]:
            serve[j] = best_i
            extra[best_i] += 1
    return np.int64(0)


@njit(cache=True)
def dispatch_kernel(code, buf, head, qlen, slot, conn, aidx, serve):
    if code == POL_DSSG:
        return dssg_kernel(buf, head, qlen, slot, conn, aidx, serve)
    elif code == POL_DQSG:
        return dqsg_kernel(buf, head, qlen, slot, conn, aidx, serve)
    elif code == POL_DMWS:
        return dmws_kernel(buf, head, qlen, slot, conn, aidx, serve)
    elif code == POL_QSSG:
        return qssg_kernel(buf, head, qlen, slot, conn, aidx, serve)
    elif code == POL_DWM:
        return matching_kernel(buf, head, qlen, slot, conn, aidx, serve, False)
    elif code == POL_DWMN:
        return matching_kernel(buf, head, qlen, slot, conn, aidx, serve, True)
    else:
        return hybrid_kernel(buf, head, qlen, slot, conn, aidx, serve)


# ---------------------------------------------------------------------------
# MWF condition probe (Appendix-style sufficient condition, M = n)
# ---------------------------------------------------------------------------

@njit(cache=True)
def mwf_violations(buf, head, qlen, slot, conn, aidx, serve):
    """Count (server, r) pairs violating: if server j serves queue i then
    W_i(t) >= Z_{r,n}(t) for every connected max-HOL queue r with Q_r >= n.
    State must be the slot-start (post-arrival, pre-service) state."""
    n = qlen.shape[0]
    w = np.empty(n, dtype=np.int64)
    for i in range(n):
        w[i] = hol_age(buf, head, qlen, slot, aidx, i)
    bad = 0
    for j in range(n):
        i = serve[j]
        if i < 0:
            continue
        wmax = np.int64(-1)
        for r in range(n):
            if conn[r, j] != 0 and w[r] > wmax:
                wmax = w[r]
        for r in range(n):
            if conn[r, j] != 0 and w[r] == wmax and qlen[r] >= n:
                z_rn = slot - buf[r, head[r] + n - 1] // aidx
                if w[i] < z_rn:
                    bad += 1
    return bad


# ---------------------------------------------------------------------------
# Fused simulation loop
# ---------------------------------------------------------------------------

@njit(cache=True)
def run_sim(seedmix, n, horizon, warmup,
            akind, a_thr, a_amount, a_trans, a_pi0,
            ckind, c_thr, c_bits, c_m, c_near, c_far, c_pin, c_pif,
            policy_code, aidx, thresholds, abort_cap, qtot_out):
    """Simulate one (policy, path) cell entirely in nopython mode.

    Returns (violations per threshold, slot samples, queue-length sum,
    max ops/slot, arrived, departed, in_system, aborted flag, stop slot).
    Delay statistics are sampled each post-warmup slot from the post-arrival
    state; packets depart at slot end.
    """
    a_state = np.zeros(n, dtype=np.int8)
    c_state = np.zeros((n, n), dtype=np.int8)
    init_chain_states(seedmix, akind, a_pi0, a_state, ckind, c_pin, c_pif, c_state)
    counts = np.empty(n, dtype=np.int64)
    conn = np.empty((n, n), dtype=np.uint8)
    buf = np.zeros((n, 64), dtype=np.int64)
    head = np.zeros(n, dtype=np.int64)
    qlen = np.zeros(n, dtype=np.int64)
    serve = np.empty(n, dtype=np.int64)
    nb = thresholds.shape[0]
    viol = np.zeros(nb, dtype=np.int64)
    samples = np.int64(0)
    qsum = np.int64(0)
    ops_max = np.int64(0)
    arrived = np.int64(0)
    departed = np.int64(0)
    in_system = np.int64(0)
    aborted = False
    stop_slot = horizon
    record_qtot = qtot_out.shape[0] > 0
    for t in range(horizon):
        gen_arrivals(seedmix, t, akind, a_thr, a_amount, a_trans, a_state, counts)
        gen_conn(seedmix, t, ckind, c_thr, c_bits, c_m, c_near, c_far, c_state, conn)
        buf = append_arrivals(buf, head, qlen, counts, t, aidx)
        for i in range(n):
            arrived += counts[i]
            in_system += counts[i]
        if in_system > abort_cap:
            aborted = True
            stop_slot = t
            break
        wmax = np.int64(0)
        qtot = np.int64(0)
        for i in range(n):
            if qlen[i] > 0:
                qtot += qlen[i]
                age = t - buf[i, head[i]] // aidx
                if age > wmax:
                    wmax = age
        if record_qtot:
            qtot_out[t] = qtot
        if t >= warmup:
            samples += 1
            qsum += qtot
            for b in range(nb):
                if wmax > thresholds[b]:
                    viol[b] += 1
        ops = dispatch_kernel(policy_code, buf, head, qlen, t, conn, aidx, serve)
        if ops > ops_max:
            ops_max = ops
        d = apply_service(head, qlen, serve)
        departed += d
        in_system -= d
    return viol, samples, qsum, ops_max, arrived, departed, in_system, aborted, stop_slot


@njit(cache=True)
def bench_kernel(policy_code, bufs, heads, qlens, slots, conns, aidx, reps):
    """Repeatedly run one policy kernel over captured state snapshots; the
    caller times this call.  Returns a fold of serve counts to keep the work
    observable."""
    nsnap = slots.shape[0]
    n = qlens.shape[1]
    serve = np.empty(n, dtype=np.int64)
    acc = np.int64(0)
    for _ in range(reps):
        for s in range(nsnap):
            dispatch_kernel(policy_code, bufs[s], heads[s], qlens[s],
                            slots[s], conns[s], aidx, serve)
            for j in range(n):
                if serve[j] >= 0:
                    acc += 1
    return acc

"""Exact maximum-weight bipartite matching between packets and servers.

Left vertices carry integer weight triples (delay, n+1-queue_id, cap-arrival_index);
the total weight of a matching is the fieldwise sum of matched triples compared
lexicographically.  Triples are packed into one int64 with multipliers sized so
packed sums order exactly like lexicographic triple sums.

All weight lives on the left side and is strictly positive, so inserting left
vertices in descending weight order and augmenting along alternating paths
(successive shortest augmenting paths; the potentials are identically zero for
one-sided weights) yields the optimum: reassignments along an alternating path
never change the total, and a vertex that cannot be matched against the current
matching can never be matched later.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit


class GraphError(ValueError):
    pass


@dataclass
class WeightedBipartiteGraph:
    """Bipartite graph: ``weights[k]`` is the triple of left vertex k,
    ``adjacency[k]`` a bitset over right vertices (bit j = edge to server j)."""

    n_left: int
    n_right: int
    weights: np.ndarray     # int64[n_left, 3]
    adjacency: np.ndarray   # uint64[n_left, ceil(n_right/64)]

    @classmethod
    def from_edges(cls, n_left: int, n_right: int,
                   weights: list[tuple[int, int, int]],
                   edges: list[tuple[int, int]]) -> "WeightedBipartiteGraph":
        if len(weights) != n_left:
            raise GraphError("one weight triple per left vertex required")
        w = np.asarray(weights, dtype=np.int64).reshape(n_left, 3) if n_left else \
            np.zeros((0, 3), dtype=np.int64)
        if (w < 0).any() or (n_left and (w == 0).all(axis=1).any()):
            raise GraphError("weight triples must be lexicographically positive")
        words = max(1, (n_right + 63) // 64)
        adj = np.zeros((max(1, n_left), words), dtype=np.uint64)
        seen = set()
        for (u, v) in edges:
            if not (0 <= u < n_left and 0 <= v < n_right):
                raise GraphError(f"edge ({u}, {v}) out of range")
            if (u, v) in seen:
                raise GraphError(f"parallel edge ({u}, {v})")
            seen.add((u, v))
            adj[u, v >> 6] |= np.uint64(1) << np.uint64(v & 63)
        return cls(n_left, n_right, w, adj)

    def has_edge(self, u: int, v: int) -> bool:
        return bool((self.adjacency[u, v >> 6] >> np.uint64(v & 63)) & np.uint64(1))


def pack_weights(weights: np.ndarray, k_max: int) -> np.ndarray:
    """Pack triples so that packed sums over any <= k_max vertices compare like
    lexicographic triple sums."""
    if weights.size == 0:
        return np.zeros(0, dtype=np.int64)
    k = max(1, k_max)
    max_mid = max(1, int(weights[:, 1].max(initial=0)))
    max_low = max(1, int(weights[:, 2].max(initial=0)))
    m2 = k * max_low + 1
    m1 = m2 * (k * max_mid + 1)
    max_d = int(weights[:, 0].max(initial=0))
    if max_d > 0 and max_d * m1 > (1 << 62) // k:
        raise GraphError("packed weights would overflow int64")
    return weights[:, 0] * m1 + weights[:, 1] * m2 + weights[:, 2]


@njit(cache=True)
def _kuhn_bitset(order, adj, n_right, words, left_match, right_match):
    row_stack = np.empty(n_right + 1, dtype=np.int64)
    next_j = np.empty(n_right + 1, dtype=np.int64)
    col_at = np.empty(n_right + 1, dtype=np.int64)
    visited = np.zeros(n_right, dtype=np.int64)
    stamp = 0
    one = np.uint64(1)
    for r in range(order.shape[0]):
        stamp += 1
        lvl = 0
        row_stack[0] = order[r]
        next_j[0] = 0
        while lvl >= 0:
            u = row_stack[lvl]
            j = next_j[lvl]
            descended = False
            while j < n_right:
                if ((adj[u, j >> 6] >> np.uint64(j & 63)) & one) != 0 and visited[j] != stamp:
                    visited[j] = stamp
                    next_j[lvl] = j + 1
                    col_at[lvl] = j
                    occ = right_match[j]
                    if occ < 0:
                        for k in range(lvl, -1, -1):
                            right_match[col_at[k]] = row_stack[k]
                            left_match[row_stack[k]] = col_at[k]
                        lvl = -2
                        descended = True
                        break
                    lvl += 1
                    row_stack[lvl] = occ
                    next_j[lvl] = 0
                    descended = True
                    break
                j += 1
            if not descended:
                lvl -= 1


def max_weight_matching(g: WeightedBipartiteGraph) -> list[tuple[int, int]]:
    """Matching maximizing the lexicographic total weight.

    Deterministic: left vertices are processed by descending packed weight with
    index as tiebreak, and augmenting searches scan servers in ascending order.
    """
    if g.n_left == 0 or g.n_right == 0:
        return []
    packed = pack_weights(g.weights, min(g.n_left, g.n_right))
    order = np.lexsort((np.arange(g.n_left), -packed))
    left_match = np.full(g.n_left, -1, dtype=np.int64)
    right_match = np.full(g.n_right, -1, dtype=np.int64)
    _kuhn_bitset(order.astype(np.int64), g.adjacency, g.n_right,
                 g.adjacency.shape[1], left_match, right_match)
    return [(int(u), int(left_match[u])) for u in range(g.n_left) if left_match[u] >= 0]


def matching_weight(g: WeightedBipartiteGraph, pairs: list[tuple[int, int]]) -> tuple[int, int, int]:
    """Fieldwise triple sum of a matching (the quantity being maximized)."""
    tot = np.zeros(3, dtype=np.int64)
    for (u, _v) in pairs:
        tot += g.weights[u]
    return (int(tot[0]), int(tot[1]), int(tot[2]))

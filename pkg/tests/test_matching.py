"""Matching kernel: exactness against enumeration, validity, determinism."""
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mcsched.harness import _brute_force_best, _random_graph
from mcsched.matching import (GraphError, WeightedBipartiteGraph,
                              matching_weight, max_weight_matching, pack_weights)


def complete_graph(weights, n_right):
    m = len(weights)
    edges = [(u, v) for u in range(m) for v in range(n_right)]
    return WeightedBipartiteGraph.from_edges(m, n_right, weights, edges)


class TestExamples:
    def test_empty_graph(self):
        g = WeightedBipartiteGraph.from_edges(0, 3, [], [])
        assert max_weight_matching(g) == []

    def test_two_by_two_complete(self):
        g = complete_graph([(5, 1, 1), (3, 1, 1)], 2)
        pairs = max_weight_matching(g)
        assert matching_weight(g, pairs)[0] == 8
        assert len(pairs) == 2

    def test_star_graph_takes_heaviest(self):
        g = complete_graph([(7, 1, 1), (5, 1, 1), (2, 1, 1)], 1)
        pairs = max_weight_matching(g)
        assert len(pairs) == 1 and pairs[0][0] == 0

    def test_validation_errors(self):
        with pytest.raises(GraphError):
            WeightedBipartiteGraph.from_edges(1, 2, [(1, 1, 1)], [(0, 0), (0, 0)])
        with pytest.raises(GraphError):
            WeightedBipartiteGraph.from_edges(1, 2, [(0, 0, 0)], [(0, 0)])
        with pytest.raises(GraphError):
            WeightedBipartiteGraph.from_edges(1, 2, [(1, 1, 1)], [(0, 5)])


class TestOracle:
    def test_matches_enumeration(self):
        rng = np.random.default_rng(10)
        for k in range(1500):
            g = _random_graph(rng)
            pairs = max_weight_matching(g)
            packed = pack_weights(g.weights, min(g.n_left, g.n_right) or 1)
            got = sum(int(packed[u]) for (u, _v) in pairs)
            adj1 = g.adjacency[:, 0] if g.n_left else np.zeros(0, dtype=np.uint64)
            want = int(_brute_force_best(packed.astype(np.int64), adj1, g.n_right))
            assert got == want, f"trial {k}"

    def test_matching_validity(self):
        rng = np.random.default_rng(11)
        for _ in range(500):
            g = _random_graph(rng)
            pairs = max_weight_matching(g)
            assert len({u for u, _ in pairs}) == len(pairs)
            assert len({v for _, v in pairs}) == len(pairs)
            assert all(g.has_edge(u, v) for u, v in pairs)

    def test_adding_edge_never_decreases_weight(self):
        rng = np.random.default_rng(12)
        for _ in range(300):
            m = int(rng.integers(1, 7))
            r = int(rng.integers(1, 5))
            weights = [(int(rng.integers(0, 9)), int(rng.integers(1, 5)),
                        int(rng.integers(1, 4))) for _ in range(m)]
            edges = [(u, v) for u in range(m) for v in range(r)
                     if rng.random() < 0.4]
            missing = [(u, v) for u in range(m) for v in range(r)
                       if (u, v) not in edges]
            if not missing:
                continue
            g1 = WeightedBipartiteGraph.from_edges(m, r, weights, edges)
            extra = missing[int(rng.integers(0, len(missing)))]
            g2 = WeightedBipartiteGraph.from_edges(m, r, weights, edges + [extra])
            packed = pack_weights(np.asarray(weights, dtype=np.int64), min(m, r))
            w1 = sum(int(packed[u]) for u, _ in max_weight_matching(g1))
            w2 = sum(int(packed[u]) for u, _ in max_weight_matching(g2))
            assert w2 >= w1

    def test_deterministic(self):
        rng = np.random.default_rng(13)
        for _ in range(100):
            g = _random_graph(rng)
            assert max_weight_matching(g) == max_weight_matching(g)


class TestPackedWeights:
    @settings(max_examples=200, deadline=None)
    @given(st.data())
    def test_packed_sums_order_like_lexicographic_sums(self, data):
        k = data.draw(st.integers(1, 4))
        triples = st.tuples(st.integers(0, 50), st.integers(0, 20), st.integers(0, 10))
        a = data.draw(st.lists(triples, min_size=0, max_size=k))
        b = data.draw(st.lists(triples, min_size=0, max_size=k))
        pool = np.asarray(a + b + [(1, 1, 1)], dtype=np.int64)
        packed = pack_weights(pool, k)
        sa = tuple(np.asarray(a, dtype=np.int64).reshape(-1, 3).sum(axis=0))
        sb = tuple(np.asarray(b, dtype=np.int64).reshape(-1, 3).sum(axis=0))
        pa = int(packed[: len(a)].sum())
        pb = int(packed[len(a): len(a) + len(b)].sum())
        assert (sa < sb) == (pa < pb)
        assert (sa == sb) == (pa == pb)

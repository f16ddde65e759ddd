import itertools

import numpy as np
import pytest

from vgforecast.visibility import (
    VisibilityError,
    VisibilityGraph,
    degrees,
    parse_graph,
    serialize_graph,
    vg_fast,
    vg_oracle,
)


def bfs_dist(g, src):
    dist = {src: 0}
    frontier = [src]
    while frontier:
        nxt = []
        for u in frontier:
            for v in g.neighbors(u):
                if v not in dist:
                    dist[v] = dist[u] + 1
                    nxt.append(v)
        frontier = nxt
    return dist


class TestOracle:
    def test_convex_series_is_complete(self):
        g = vg_oracle([1, 2, 4, 8])
        assert g.edge_set() == {(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)}

    def test_constant_series_is_path(self):
        g = vg_oracle([5, 5, 5, 5])
        assert g.edge_set() == {(0, 1), (1, 2), (2, 3)}

    def test_hand_enumerated_case(self):
        # every pair of [1,3,2,4] checked by hand against the strict criterion
        g = vg_oracle([1, 3, 2, 4])
        assert g.edge_set() == {(0, 1), (1, 2), (2, 3), (1, 3)}

    def test_rejects_short_series(self):
        with pytest.raises(VisibilityError):
            vg_oracle([1.0])

    def test_rejects_nonpositive(self):
        with pytest.raises(VisibilityError):
            vg_oracle([1.0, 0.0, 2.0])
        with pytest.raises(VisibilityError):
            vg_oracle([1.0, -3.0, 2.0])

    def test_concave_series_is_path(self):
        g = vg_oracle([1, 4, 5, 4, 1])
        assert g.edge_set() == {(0, 1), (1, 2), (2, 3), (3, 4)}

    def test_spike_blocks_cross_visibility(self):
        g = vg_oracle([1, 1, 9, 1, 1])
        assert g.edge_set() == {(0, 1), (0, 2), (1, 2), (2, 3), (2, 4), (3, 4)}


class TestFastEquivalence:
    def test_exhaustive_small_grid(self):
        for n in range(2, 7):
            for combo in itertools.product((1.0, 2.0, 3.0), repeat=n):
                assert vg_fast(combo) == vg_oracle(combo), combo

    def test_random_series(self):
        rng = np.random.default_rng(7)
        for _ in range(300):
            n = int(rng.integers(2, 129))
            x = rng.uniform(0.1, 10.0, size=n)
            assert vg_fast(x) == vg_oracle(x)

    def test_random_walk_series(self):
        rng = np.random.default_rng(11)
        for _ in range(100):
            n = int(rng.integers(8, 100))
            x = np.exp(np.cumsum(rng.normal(0, 0.05, size=n))) * 50
            assert vg_fast(x) == vg_oracle(x)

    def test_nonuniform_time_coordinates(self):
        rng = np.random.default_rng(13)
        for _ in range(50):
            n = int(rng.integers(3, 40))
            x = rng.uniform(0.5, 5.0, size=n)
            t = np.cumsum(rng.uniform(0.2, 3.0, size=n))
            assert vg_fast(x, t) == vg_oracle(x, t)


class TestProperties:
    def test_consecutive_edges_and_connectivity(self):
        rng = np.random.default_rng(3)
        for _ in range(50):
            n = int(rng.integers(2, 60))
            g = vg_fast(rng.uniform(0.1, 4.0, size=n))
            es = g.edge_set()
            for i in range(n - 1):
                assert (i, i + 1) in es
            assert len(bfs_dist(g, 0)) == n

    def test_affine_invariance(self):
        rng = np.random.default_rng(5)
        for _ in range(200):
            n = int(rng.integers(3, 50))
            x = rng.uniform(1.0, 9.0, size=n)
            a = rng.uniform(0.1, 10.0)
            b = rng.uniform(0.0, 5.0)
            assert vg_fast(a * x + b).edge_set() == vg_fast(x).edge_set()

    def test_graph_distance_bounded_by_index_distance(self):
        rng = np.random.default_rng(9)
        for _ in range(30):
            n = int(rng.integers(3, 40))
            g = vg_fast(rng.uniform(0.5, 3.0, size=n))
            for src in range(n):
                dist = bfs_dist(g, src)
                for v, d in dist.items():
                    assert d <= abs(v - src)

    def test_degrees(self):
        assert degrees(vg_oracle([1, 2, 4, 8])).tolist() == [3, 3, 3, 3]
        assert degrees(vg_oracle([5, 5, 5, 5])).tolist() == [1, 2, 2, 1]
        assert degrees(vg_oracle([2, 3])).tolist() == [1, 1]

    def test_degree_sum_is_twice_edges(self):
        rng = np.random.default_rng(17)
        for _ in range(20):
            g = vg_fast(rng.uniform(0.1, 2.0, size=int(rng.integers(2, 80))))
            assert degrees(g).sum() == 2 * g.n_edges


class TestSerialization:
    def test_round_trip(self):
        rng = np.random.default_rng(21)
        for _ in range(20):
            g = vg_fast(rng.uniform(0.5, 8.0, size=int(rng.integers(2, 50))))
            assert parse_graph(serialize_graph(g)) == g

    def test_format_shape(self):
        g = vg_oracle([5, 5, 5])
        text = serialize_graph(g)
        assert text.splitlines() == ["3", "0 1", "1 2"]

    def test_rejects_garbage(self):
        with pytest.raises(VisibilityError):
            parse_graph("")
        with pytest.raises(VisibilityError):
            parse_graph("3\n0 5\n")
        with pytest.raises(VisibilityError):
            parse_graph("3\n0 x\n")

    def test_rejects_duplicate_edges(self):
        with pytest.raises(VisibilityError):
            parse_graph("3\n0 1\n0 1\n")

    def test_edges_sorted_lexicographically(self):
        g = VisibilityGraph(4, np.array([[2, 3], [0, 1], [1, 3], [1, 2]], dtype=np.int32))
        assert g.edges.tolist() == [[0, 1], [1, 2], [1, 3], [2, 3]]

import numpy as np
import pytest
from conftest import dijkstra_oracle, oracle_path, random_graph
from hypothesis import given, settings
from hypothesis import strategies as st

from orderpick.pathing import PathCache, PathError, SpatialIndex, cached_precompute, precompute
from orderpick.warehouse import generate_layout


def test_distances_and_paths_match_oracle():
    rng = np.random.default_rng(11)
    for _ in range(10):
        g = random_graph(rng, int(rng.integers(2, 40)))
        cache = precompute(g)
        for a in range(len(g)):
            dist, prev = dijkstra_oracle(g, a)
            np.testing.assert_array_equal(cache.dist[a], dist)
            for b in range(len(g)):
                assert cache.shortest_path(a, b) == oracle_path(prev, a, b)


def test_path_endpoints_and_length():
    g = generate_layout(3, 4, 2)
    cache = precompute(g)
    for a, b in [(0, 11), (5, len(g) - 1), (3, 3)]:
        path = cache.shortest_path(a, b)
        assert path[0] == a and path[-1] == b
        assert all(v in g.adjacency[u] for u, v in zip(path, path[1:]))
        assert cache.path_length(path) == pytest.approx(cache.dist[a, b])


def test_trivial_path():
    cache = precompute(generate_layout(1, 2, 1))
    assert cache.shortest_path(2, 2) == [2]


def test_unknown_node():
    cache = precompute(generate_layout(1, 2, 1))
    with pytest.raises(PathError):
        cache.shortest_path(0, 99)


def test_cache_roundtrip(tmp_path):
    g = generate_layout(2, 3, 1)
    a = cached_precompute(g, tmp_path)
    files = list(tmp_path.glob("paths-*.npz"))
    assert len(files) == 1 and g.layout_hash in files[0].name
    b = cached_precompute(g, tmp_path)
    np.testing.assert_array_equal(a.dist, b.dist)
    np.testing.assert_array_equal(a.next_hop, b.next_hop)
    c = PathCache.load(files[0])
    assert c.shortest_path(0, 5) == a.shortest_path(0, 5)


def test_cache_is_read_only():
    cache = precompute(generate_layout(1, 2, 1))
    with pytest.raises(ValueError):
        cache.dist[0, 1] = 0.0


def _linear_nearest(positions, p):
    d = np.linalg.norm(positions - p, axis=1)
    return int(np.flatnonzero(d == d.min()).min())


def test_nearest_node_matches_linear_scan():
    rng = np.random.default_rng(2)
    pos = rng.random((200, 2)) * 50
    idx = SpatialIndex(pos)
    for p in rng.random((1000, 2)) * 55 - 2.5:
        assert idx.nearest_node(p) == _linear_nearest(pos, p)


def test_nearest_node_exact_hit_and_tie():
    pos = np.array([[0.0, 0.0], [2.0, 0.0], [0.0, 0.0]])
    idx = SpatialIndex(pos)
    assert idx.nearest_node([2.0, 0.0]) == 1
    assert idx.nearest_node([0.0, 0.0]) == 0
    assert idx.nearest_node([1.0, 0.0]) == 0  # equidistant from 0 and 1


def test_nearest_nodes_vectorised():
    pos = np.array([[0.0, 0.0], [1.0, 1.0]])
    idx = SpatialIndex(pos)
    assert idx.nearest_nodes(np.array([[0.9, 0.9], [0.1, 0.0]])).tolist() == [1, 0]


def test_empty_index_rejected():
    with pytest.raises(PathError):
        SpatialIndex(np.zeros((0, 2)))


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 10_000), n=st.integers(2, 25))
def test_triangle_inequality(seed, n):
    g = random_graph(np.random.default_rng(seed), n)
    d = precompute(g).dist
    # d[i, k] <= d[i, j] + d[j, k] for all i, j, k
    assert np.all(d[:, None, :] <= d[:, :, None] + d[None, :, :] + 1e-9)

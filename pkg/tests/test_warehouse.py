import math
from collections import deque

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from orderpick.warehouse import (
    InvalidParameter,
    Location,
    LocationKind,
    Order,
    OrderLine,
    OrderProfile,
    WarehouseGraph,
    WorkerSpec,
    generate_layout,
    partition_sectors,
    sample_order,
)


def bfs_reachable(graph, source):
    seen = {source}
    q = deque([source])
    while q:
        u = q.popleft()
        for v in graph.adjacency[u]:
            if v not in seen:
                seen.add(v)
                q.append(v)
    return seen


def test_paper_layout_counts():
    g = generate_layout(22, 58, 4)
    assert g.n_items == 1276
    assert len(g.stations) == 4
    assert len(g) == 1276 + 2 * 22 + 4
    assert len(bfs_reachable(g, 0)) == len(g)


def test_tiny_layout_counts():
    g = generate_layout(2, 5, 1)
    assert (g.n_items, len(g.stations), len(g.idle_points), len(g)) == (10, 1, 4, 15)


def test_item_slots_hold_their_own_index():
    g = generate_layout(3, 4, 2)
    for i in g.item_slots:
        assert g.locations[i].item == i
        assert g.locations[i].kind == LocationKind.ITEM_SLOT


def test_edge_weights_are_euclidean():
    g = generate_layout(3, 4, 2)
    for u, v, w in g.edges:
        assert w == pytest.approx(math.dist(g.positions[u], g.positions[v]))


def test_scale_shrinks_coordinates():
    a = generate_layout(2, 3, 1, scale=1.0)
    b = generate_layout(2, 3, 1, scale=1 / 3)
    np.testing.assert_allclose(b.positions, a.positions / 3)


def test_single_aisle_many_stations_distinct():
    g = generate_layout(1, 3, 3)
    pos = {tuple(g.positions[s]) for s in g.stations}
    assert len(pos) == 3


def test_disconnected_graph_rejected():
    locs = [Location(0, LocationKind.ITEM_SLOT, (0, 0), 0), Location(1, LocationKind.ITEM_SLOT, (1, 0), 1),
            Location(2, LocationKind.IDLE_POINT, (5, 5))]
    with pytest.raises(InvalidParameter, match="disconnected"):
        WarehouseGraph(locs, [(0, 1)])


def test_item_slots_must_come_first():
    locs = [Location(0, LocationKind.IDLE_POINT, (0, 0)), Location(1, LocationKind.ITEM_SLOT, (1, 0), 0)]
    with pytest.raises(InvalidParameter):
        WarehouseGraph(locs, [(0, 1)])


def test_bad_layout_parameters():
    with pytest.raises(InvalidParameter):
        generate_layout(0, 5, 1)
    with pytest.raises(InvalidParameter):
        generate_layout(2, 5, 1, scale=0)


def test_layout_hash_stable_and_sensitive():
    assert generate_layout(2, 5, 1).layout_hash == generate_layout(2, 5, 1).layout_hash
    assert generate_layout(2, 5, 1).layout_hash != generate_layout(2, 6, 1).layout_hash


def test_normalized_positions_unit_box():
    g = generate_layout(4, 6, 2)
    n = g.normalized_positions
    assert n.min() == 0.0 and n.max() == 1.0


def _truncated_poisson_mean(rate, lo, hi):
    w = [rate ** k / math.factorial(k) for k in range(lo, hi + 1)]
    return sum(k * wk for k, wk in zip(range(lo, hi + 1), w)) / sum(w)


def test_length_pmf_mean_matches_target():
    p = OrderProfile.uniform(50, 5.0)
    ks = p.lengths
    assert p.length_pmf @ ks == pytest.approx(5.0, abs=1e-9)
    # independent route: bisection on the closed-form truncated mean
    lo, hi = 1e-6, 100.0
    for _ in range(200):
        mid = (lo + hi) / 2
        lo, hi = (mid, hi) if _truncated_poisson_mean(mid, 1, 10) < 5.0 else (lo, mid)
    w = np.array([lo ** k / math.factorial(k) for k in ks])
    np.testing.assert_allclose(p.length_pmf, w / w.sum(), atol=1e-9)


def test_order_lengths_follow_pmf():
    p = OrderProfile.uniform(40, 5.0)
    rng = np.random.default_rng(3)
    lengths = np.array([len(sample_order(p, rng).lines) for _ in range(20000)])
    observed = np.bincount(lengths, minlength=p.max_length + 1)[p.min_length:]
    expected = p.length_pmf * len(lengths)
    keep = expected >= 5
    obs, exp = observed[keep], expected[keep]
    exp = exp * obs.sum() / exp.sum()
    assert stats.chisquare(obs, exp).pvalue > 1e-3
    assert lengths.mean() == pytest.approx(5.0, abs=0.05)


def test_order_items_distinct_and_uniform():
    p = OrderProfile.uniform(10, 3.0)
    rng = np.random.default_rng(5)
    counts = np.zeros(10)
    for _ in range(5000):
        items = [ln.item for ln in sample_order(p, rng).lines]
        assert len(set(items)) == len(items)
        counts[items] += 1
    assert stats.chisquare(counts).pvalue > 1e-3


def test_order_length_capped_by_item_count():
    p = OrderProfile.uniform(3, 5.0, max_length=10)
    rng = np.random.default_rng(0)
    assert all(len(sample_order(p, rng).lines) <= 3 for _ in range(200))


def test_profile_validation():
    with pytest.raises(InvalidParameter):
        OrderProfile(5.0, 6, 10, (1.0,))
    with pytest.raises(InvalidParameter):
        OrderProfile(2.0, 1, 4, (0.5, 0.4))


def test_order_pick_item():
    o = Order([OrderLine(3), OrderLine(5)])
    assert o.pick_item(7) == 0
    assert o.pick_item(3) == 1
    assert o.remaining_items() == [5]
    assert o.pick_item(3) == 0
    o.pick_item(5)
    assert o.done


def test_worker_starts_default():
    g = generate_layout(2, 5, 2)
    starts = WorkerSpec(3, 2).resolve_starts(g)
    assert starts[:3] == [int(g.stations[0]), int(g.stations[1]), int(g.stations[0])]
    assert all(s in g.idle_points for s in starts[3:])


def test_worker_spec_errors():
    with pytest.raises(InvalidParameter):
        WorkerSpec(0, 1)
    g = generate_layout(2, 5, 1)
    with pytest.raises(InvalidParameter):
        WorkerSpec(2, 1, start_locations=(0,)).resolve_starts(g)


@settings(max_examples=60, deadline=None)
@given(aisles=st.integers(1, 6), slots=st.integers(1, 8), stations=st.integers(1, 3), data=st.data())
def test_partition_properties(aisles, slots, stations, data):
    g = generate_layout(aisles, slots, stations)
    k = data.draw(st.integers(1, len(g)))
    part = partition_sectors(g, k)
    members = np.concatenate([part.members(s) for s in range(k)])
    assert sorted(members.tolist()) == list(range(len(g)))
    assert all(len(part.members(s)) > 0 for s in range(k))
    if k <= g.n_items:
        sizes = [np.isin(part.members(s), g.item_slots).sum() for s in range(k)]
        assert max(sizes) - min(sizes) <= 1
        # bands are ordered left to right
        xs = [g.positions[part.members(s)[np.isin(part.members(s), g.item_slots)], 0] for s in range(k)]
        for a, b in zip(xs, xs[1:]):
            assert a.max() <= b.min() + 1e-12


def test_partition_bounds():
    g = generate_layout(2, 5, 1)
    with pytest.raises(InvalidParameter):
        partition_sectors(g, 0)
    with pytest.raises(InvalidParameter):
        partition_sectors(g, len(g) + 1)

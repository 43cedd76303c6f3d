import heapq

import numpy as np
import pytest

from orderpick.config import resolve
from orderpick.engine import EngineConfig, OrderPickingEnv
from orderpick.warehouse import (
    Location,
    LocationKind,
    OrderProfile,
    WarehouseGraph,
    WorkerSpec,
    generate_layout,
)


def make_tiny_env(record_events=False, **engine):
    g = generate_layout(2, 5, 1)
    cfg = EngineConfig(**{"orders_per_episode": 10, "max_ticks": 2000, **engine})
    return OrderPickingEnv(g, WorkerSpec(2, 1), OrderProfile.uniform(g.n_items, 5, max_length=10), cfg,
                           record_events=record_events)


@pytest.fixture
def tiny_env():
    return make_tiny_env()


@pytest.fixture
def tiny_config():
    return resolve(preset="tiny")


@pytest.fixture(autouse=True)
def _output_root(tmp_path, monkeypatch):
    monkeypatch.setenv("ORDERPICK_OUTPUT_ROOT", str(tmp_path / "runs"))


def random_graph(rng, n, extra=None):
    """Connected graph on ``n`` random points: a random spanning tree plus chords."""
    locs = [Location(i, LocationKind.ITEM_SLOT, tuple(rng.random(2) * 10), i) for i in range(n)]
    perm = rng.permutation(n)
    edges = [(int(perm[i]), int(perm[rng.integers(i)])) for i in range(1, n)]
    for _ in range(rng.integers(0, 2 * n) if extra is None else extra):
        u, v = rng.integers(n, size=2)
        if u != v:
            edges.append((int(u), int(v)))
    return WarehouseGraph(locs, edges)


def dijkstra_oracle(graph, source):
    """Textbook binary-heap Dijkstra: distances and predecessor links."""
    dist = [np.inf] * len(graph)
    prev = [-1] * len(graph)
    dist[source] = 0.0
    heap = [(0.0, source)]
    while heap:
        d, u = heapq.heappop(heap)
        if d > dist[u]:
            continue
        for v, w in graph.adjacency[u].items():
            if d + w < dist[v]:
                dist[v] = d + w
                prev[v] = u
                heapq.heappush(heap, (d + w, v))
    return dist, prev


def oracle_path(prev, a, b):
    path = [b]
    while path[-1] != a:
        path.append(prev[path[-1]])
    return path[::-1]


VERDICTS: list[str] = []


@pytest.fixture
def verdict():
    """Record and print a one-line PASS/FAIL for an acceptance criterion."""
    def record(number: int, ok: bool, detail: str) -> bool:
        line = f"criterion {number}: {'PASS' if ok else 'FAIL'} {detail}"
        VERDICTS.append(line)
        print(line)
        return ok
    return record


def pytest_terminal_summary(terminalreporter):
    if VERDICTS:
        terminalreporter.section("acceptance")
        for line in VERDICTS:
            terminalreporter.write_line(line)

"""All-pairs shortest paths and coordinate-to-node lookup.

Instead of storing every path, the cache keeps a distance matrix and a
next-hop matrix; a path is rebuilt by following successors, one O(1) lookup
per hop.
"""

from __future__ import annotations

import logging
from pathlib import Path

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import dijkstra
from scipy.spatial import cKDTree

from .warehouse import WarehouseGraph

logger = logging.getLogger(__name__)

COORD_QUANTUM = 1e-6


class PathError(ValueError):
    pass


class PathCache:
    def __init__(self, dist: np.ndarray, next_hop: np.ndarray):
        self.dist = dist
        self.next_hop = next_hop
        self.dist.setflags(write=False)
        self.next_hop.setflags(write=False)

    def __len__(self) -> int:
        return self.dist.shape[0]

    @property
    def nbytes(self) -> int:
        return self.dist.nbytes + self.next_hop.nbytes

    def _check(self, node: int) -> int:
        if not 0 <= node < len(self):
            raise PathError(f"node id {node} outside [0, {len(self)})")
        return int(node)

    def shortest_path(self, a: int, b: int) -> list[int]:
        a, b = self._check(a), self._check(b)
        path = [a]
        hop = self.next_hop
        while a != b:
            a = int(hop[a, b])
            path.append(a)
        return path

    def path_length(self, path: list[int]) -> float:
        return float(sum(self.dist[u, v] for u, v in zip(path, path[1:])))

    def save(self, path: str | Path) -> None:
        np.savez_compressed(path, dist=self.dist, next_hop=self.next_hop)

    @classmethod
    def load(cls, path: str | Path) -> PathCache:
        with np.load(path) as data:
            return cls(np.array(data["dist"]), np.array(data["next_hop"]))


def precompute(graph: WarehouseGraph) -> PathCache:
    n = len(graph)
    rows, cols, weights = [], [], []
    for u, v, w in graph.edges:
        rows += [u, v]
        cols += [v, u]
        weights += [w, w]
    adj = csr_matrix((weights, (rows, cols)), shape=(n, n))
    dist, pred = dijkstra(adj, directed=False, return_predecessors=True)
    if not np.all(np.isfinite(dist)):
        a, b = np.argwhere(~np.isfinite(dist))[0]
        raise PathError(f"graph is disconnected: no path from {a} to {b}")
    # pred[b, a] is the node before a on the b -> a path, i.e. the first hop
    # from a towards b on the reversed (undirected) path.
    next_hop = pred.T.astype(np.int32)
    np.fill_diagonal(next_hop, np.arange(n, dtype=np.int32))
    return PathCache(dist, next_hop)


def cached_precompute(graph: WarehouseGraph, cache_dir: str | Path | None) -> PathCache:
    """``precompute`` with an optional on-disk dump keyed by the layout hash."""
    if cache_dir is None:
        return precompute(graph)
    path = Path(cache_dir) / f"paths-{graph.layout_hash}.npz"
    if path.exists():
        logger.debug("loading path cache %s", path)
        return PathCache.load(path)
    cache = precompute(graph)
    path.parent.mkdir(parents=True, exist_ok=True)
    cache.save(path)
    return cache


class SpatialIndex:
    """Exact-coordinate hash plus a KD-tree fallback; ties go to the lowest id."""

    def __init__(self, positions: np.ndarray):
        positions = np.asarray(positions, dtype=np.float64)
        if positions.ndim != 2 or len(positions) == 0:
            raise PathError("spatial index needs at least one node")
        self.positions = positions
        self.exact: dict[tuple[int, int], int] = {}
        for i, key in enumerate(map(self._key, positions)):
            self.exact.setdefault(key, i)
        self.tree = cKDTree(positions)

    @staticmethod
    def _key(point) -> tuple[int, int]:
        return (int(round(point[0] / COORD_QUANTUM)), int(round(point[1] / COORD_QUANTUM)))

    def nearest_node(self, point) -> int:
        hit = self.exact.get(self._key(point))
        if hit is not None:
            return hit
        d, i = self.tree.query(point)
        ties = self.tree.query_ball_point(point, d * (1 + 1e-12) + 1e-12)
        return int(min(ties)) if ties else int(i)

    def nearest_nodes(self, points: np.ndarray) -> np.ndarray:
        return np.array([self.nearest_node(p) for p in np.atleast_2d(points)], dtype=np.int64)


def nearest_node(index: SpatialIndex, point) -> int:
    return index.nearest_node(point)


def shortest_path(cache: PathCache, a: int, b: int) -> list[int]:
    return cache.shortest_path(a, b)

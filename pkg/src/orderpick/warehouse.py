"""Warehouse graph, orders, worker specs and sector partitions.

Layouts are parallel-aisle graphs: item slots run along each aisle, a front
and a back cross-aisle join the aisle ends, and delivery stations hang off the
front cross-aisle.  All coordinates are stored already scaled (the simulator
runs the warehouse at reduced scale, 1:3 by default).
"""

from __future__ import annotations

import enum
import hashlib
from collections import deque
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy import optimize, stats


class InvalidParameter(ValueError):
    """Raised for layout, profile or partition parameters outside their domain."""


class Role(enum.IntEnum):
    AGV = 0
    PICKER = 1


class LocationKind(enum.IntEnum):
    ITEM_SLOT = 0
    IDLE_POINT = 1
    DELIVERY_STATION = 2


@dataclass(frozen=True)
class Location:
    id: int
    kind: LocationKind
    position: tuple[float, float]
    item: int | None = None


class WarehouseGraph:
    """Undirected, connected location graph with Euclidean edge weights.

    Item slots always occupy ids ``0 .. n_items - 1`` and slot ``i`` stores
    item ``i``; this is what lets orders be encoded as multi-hot vectors over
    item-location indices.
    """

    def __init__(self, locations: list[Location], edges: list[tuple[int, int]], scale: float = 1.0):
        self.locations = list(locations)
        self.scale = scale
        n = len(self.locations)
        if n == 0:
            raise InvalidParameter("warehouse needs at least one location")
        for i, loc in enumerate(self.locations):
            if loc.id != i:
                raise InvalidParameter(f"location ids must be dense, got {loc.id} at {i}")
            if (loc.kind == LocationKind.ITEM_SLOT) != (loc.item is not None):
                raise InvalidParameter(f"location {i}: item present iff kind is ItemSlot")

        self.positions = np.array([loc.position for loc in self.locations], dtype=np.float64)
        self.kinds = np.array([int(loc.kind) for loc in self.locations], dtype=np.int8)

        self.item_slots = np.flatnonzero(self.kinds == LocationKind.ITEM_SLOT)
        if not np.array_equal(self.item_slots, np.arange(len(self.item_slots))):
            raise InvalidParameter("item slots must occupy the lowest ids")
        items = [self.locations[i].item for i in self.item_slots]
        if sorted(items) != list(range(len(items))):
            raise InvalidParameter("item slot i must hold item i")

        self.stations = np.flatnonzero(self.kinds == LocationKind.DELIVERY_STATION)
        self.idle_points = np.flatnonzero(self.kinds == LocationKind.IDLE_POINT)

        self.adjacency: list[dict[int, float]] = [dict() for _ in range(n)]
        self.edges: list[tuple[int, int, float]] = []
        for u, v in edges:
            if u == v or not (0 <= u < n and 0 <= v < n):
                raise InvalidParameter(f"bad edge ({u}, {v})")
            w = float(np.hypot(*(self.positions[u] - self.positions[v])))
            if w <= 0:
                raise InvalidParameter(f"edge ({u}, {v}) joins coincident positions")
            if v in self.adjacency[u]:
                continue
            self.adjacency[u][v] = w
            self.adjacency[v][u] = w
            self.edges.append((min(u, v), max(u, v), w))

        unreachable = self.unreachable_from(0)
        if unreachable:
            raise InvalidParameter(f"graph is disconnected: node {unreachable[0]} unreachable from 0")

    def __len__(self) -> int:
        return len(self.locations)

    @property
    def n_items(self) -> int:
        return len(self.item_slots)

    def unreachable_from(self, source: int) -> list[int]:
        seen = np.zeros(len(self), dtype=bool)
        seen[source] = True
        queue = deque([source])
        while queue:
            u = queue.popleft()
            for v in self.adjacency[u]:
                if not seen[v]:
                    seen[v] = True
                    queue.append(v)
        return np.flatnonzero(~seen).tolist()

    def slot_of_item(self, item: int) -> int:
        return int(item)

    @cached_property
    def bounds(self) -> tuple[np.ndarray, np.ndarray]:
        lo = self.positions.min(axis=0)
        span = self.positions.max(axis=0) - lo
        span[span == 0] = 1.0
        return lo, span

    @cached_property
    def normalized_positions(self) -> np.ndarray:
        lo, span = self.bounds
        return (self.positions - lo) / span

    @cached_property
    def layout_hash(self) -> str:
        h = hashlib.sha256()
        h.update(self.positions.tobytes())
        h.update(self.kinds.tobytes())
        h.update(np.array([(u, v) for u, v, _ in self.edges], dtype=np.int64).tobytes())
        return h.hexdigest()[:16]

    def to_text(self) -> str:
        """Plain node/edge listing, one record per line."""
        lines = [f"# nodes {len(self)} edges {len(self.edges)}"]
        for loc in self.locations:
            item = "-" if loc.item is None else str(loc.item)
            x, y = loc.position
            lines.append(f"node {loc.id} {loc.kind.name} {x:.6f} {y:.6f} {item}")
        for u, v, w in self.edges:
            lines.append(f"edge {u} {v} {w:.6f}")
        return "\n".join(lines) + "\n"


def generate_layout(
    aisles: int,
    slots_per_aisle: int,
    stations: int,
    scale: float = 1 / 3,
    slot_pitch: float = 3.0,
    aisle_spacing: float = 6.0,
    cross_aisle_gap: float = 3.0,
) -> WarehouseGraph:
    """Build a parallel-aisle warehouse.

    ``slot_pitch``, ``aisle_spacing`` and ``cross_aisle_gap`` are real-world
    metres; every coordinate is multiplied by ``scale``.
    """
    if aisles < 1 or slots_per_aisle < 1 or stations < 1:
        raise InvalidParameter("aisles, slots_per_aisle and stations must all be >= 1")
    if scale <= 0 or slot_pitch <= 0 or aisle_spacing <= 0 or cross_aisle_gap <= 0:
        raise InvalidParameter("scale and spacings must be positive")

    locations: list[Location] = []
    edges: list[tuple[int, int]] = []

    def add(kind: LocationKind, x: float, y: float, item: int | None = None) -> int:
        idx = len(locations)
        locations.append(Location(idx, kind, (x * scale, y * scale), item))
        return idx

    back_y = 2 * cross_aisle_gap + (slots_per_aisle - 1) * slot_pitch
    slot_ids = []
    for a in range(aisles):
        x = a * aisle_spacing
        column = [
            add(LocationKind.ITEM_SLOT, x, cross_aisle_gap + s * slot_pitch, item=len(locations))
            for s in range(slots_per_aisle)
        ]
        edges.extend(zip(column, column[1:]))
        slot_ids.append(column)

    front = [add(LocationKind.IDLE_POINT, a * aisle_spacing, 0.0) for a in range(aisles)]
    back = [add(LocationKind.IDLE_POINT, a * aisle_spacing, back_y) for a in range(aisles)]
    for a in range(aisles):
        edges.append((front[a], slot_ids[a][0]))
        edges.append((slot_ids[a][-1], back[a]))
    edges.extend(zip(front, front[1:]))
    edges.extend(zip(back, back[1:]))

    width = (aisles - 1) * aisle_spacing
    if stations == 1:
        xs = [width / 2]
    elif width > 0:
        xs = np.linspace(0.0, width, stations).tolist()
    else:
        xs = [s * aisle_spacing for s in range(stations)]
    for x in xs:
        sid = add(LocationKind.DELIVERY_STATION, x, -cross_aisle_gap)
        nearest = min(range(aisles), key=lambda a: (abs(a * aisle_spacing - x), a))
        edges.append((sid, front[nearest]))

    return WarehouseGraph(locations, edges, scale=scale)


@dataclass(frozen=True)
class OrderLine:
    item: int
    quantity: int = 1


@dataclass
class Order:
    lines: list[OrderLine]
    remaining: set[int] = field(default_factory=set)

    def __post_init__(self):
        if not self.lines:
            raise InvalidParameter("an order needs at least one line")
        if not self.remaining:
            self.remaining = set(range(len(self.lines)))

    @property
    def done(self) -> bool:
        return not self.remaining

    def remaining_items(self) -> list[int]:
        return sorted(self.lines[i].item for i in self.remaining)

    def pick_item(self, item: int) -> int:
        """Mark every unpicked line of ``item`` as picked; returns the count."""
        hit = [i for i in self.remaining if self.lines[i].item == item]
        self.remaining.difference_update(hit)
        return len(hit)

    def copy(self) -> Order:
        return Order(list(self.lines), set(self.remaining))


@dataclass(frozen=True)
class OrderProfile:
    """Order-length distribution plus item popularity.

    Lengths follow a Poisson law truncated to ``[min_length, max_length]``
    whose rate is solved so that the truncated mean equals ``mean_length``.
    """

    mean_length: float
    min_length: int
    max_length: int
    item_weights: tuple[float, ...]

    def __post_init__(self):
        if not (1 <= self.min_length <= self.mean_length <= self.max_length):
            raise InvalidParameter("need 1 <= min_length <= mean_length <= max_length")
        w = np.asarray(self.item_weights, dtype=np.float64)
        if w.size == 0 or np.any(w < 0) or not np.isclose(w.sum(), 1.0):
            raise InvalidParameter("item weights must be non-negative and sum to 1")

    @classmethod
    def uniform(cls, n_items: int, mean_length: float = 5.0, min_length: int = 1,
                max_length: int | None = None) -> OrderProfile:
        if n_items < 1:
            raise InvalidParameter("need at least one item")
        if max_length is None:
            max_length = max(int(np.ceil(2 * mean_length)), min_length)
        return cls(mean_length, min_length, max_length, tuple([1.0 / n_items] * n_items))

    @property
    def n_items(self) -> int:
        return len(self.item_weights)

    @cached_property
    def lengths(self) -> np.ndarray:
        return np.arange(self.min_length, self.max_length + 1)

    @cached_property
    def length_pmf(self) -> np.ndarray:
        ks = self.lengths
        if len(ks) == 1:
            return np.ones(1)
        if self.mean_length <= self.min_length:
            return np.eye(len(ks))[0]
        if self.mean_length >= self.max_length:
            return np.eye(len(ks))[-1]

        def pmf(rate: float) -> np.ndarray:
            logp = stats.poisson.logpmf(ks, rate)
            p = np.exp(logp - logp.max())
            return p / p.sum()

        rate = optimize.brentq(lambda r: pmf(r) @ ks - self.mean_length, 1e-9, 10.0 * self.max_length + 10.0,
                               xtol=1e-14)
        return pmf(rate)


def sample_order(profile: OrderProfile, rng: np.random.Generator) -> Order:
    length = int(rng.choice(profile.lengths, p=profile.length_pmf))
    weights = np.asarray(profile.item_weights)
    length = min(length, int(np.count_nonzero(weights)))
    items = rng.choice(profile.n_items, size=length, replace=False, p=weights)
    return Order([OrderLine(int(p), 1) for p in items])


@dataclass(frozen=True)
class WorkerSpec:
    num_agvs: int
    num_pickers: int
    speed: float = 1.66
    start_locations: tuple[int, ...] | None = None

    def __post_init__(self):
        if self.num_agvs < 1 or self.num_pickers < 1:
            raise InvalidParameter("need at least one AGV and one picker")
        if self.speed <= 0:
            raise InvalidParameter("speed must be positive")

    @property
    def num_agents(self) -> int:
        return self.num_agvs + self.num_pickers

    def resolve_starts(self, graph: WarehouseGraph) -> list[int]:
        """Start node for every agent, AGVs first.

        Defaults: AGVs cycle over delivery stations, pickers over idle points.
        """
        if self.start_locations is not None:
            starts = list(self.start_locations)
            if len(starts) < self.num_agvs:
                raise InvalidParameter(
                    f"{self.num_agvs} AGVs but only {len(starts)} start locations")
            if len(starts) < self.num_agents:
                raise InvalidParameter(
                    f"{self.num_agents} workers but only {len(starts)} start locations")
            if any(not 0 <= s < len(graph) for s in starts):
                raise InvalidParameter("start location outside the graph")
            return starts[: self.num_agents]
        agv_pool = graph.stations if len(graph.stations) else np.arange(len(graph))
        picker_pool = graph.idle_points if len(graph.idle_points) else graph.item_slots
        return ([int(agv_pool[i % len(agv_pool)]) for i in range(self.num_agvs)]
                + [int(picker_pool[i % len(picker_pool)]) for i in range(self.num_pickers)])


@dataclass(frozen=True)
class SectorPartition:
    sectors: tuple[tuple[int, ...], ...]
    assignment: np.ndarray

    def __len__(self) -> int:
        return len(self.sectors)

    def members(self, k: int) -> np.ndarray:
        return np.asarray(self.sectors[k], dtype=np.int64)


def partition_sectors(graph: WarehouseGraph, k: int) -> SectorPartition:
    """Split the warehouse into ``k`` contiguous column bands.

    Item slots are ordered by (x, y) and cut into ``k`` runs whose sizes differ
    by at most one; every other location joins the sector of its nearest item
    slot.  When ``k`` exceeds the item-slot count, all locations are banded
    instead so that every sector stays non-empty.
    """
    n = len(graph)
    if not 1 <= k <= n:
        raise InvalidParameter(f"sector count must be in [1, {n}], got {k}")
    pos = graph.positions
    assignment = np.full(n, -1, dtype=np.int64)

    if k <= graph.n_items:
        slots = graph.item_slots
        order = slots[np.lexsort((slots, pos[slots, 1], pos[slots, 0]))]
        for s, chunk in enumerate(np.array_split(order, k)):
            assignment[chunk] = s
        others = np.flatnonzero(assignment < 0)
        if len(others):
            d = np.linalg.norm(pos[others, None, :] - pos[None, slots, :], axis=2)
            # argmin returns the first minimum, i.e. the lowest slot id on ties
            assignment[others] = assignment[slots[np.argmin(d, axis=1)]]
    else:
        ids = np.arange(n)
        order = ids[np.lexsort((ids, pos[:, 1], pos[:, 0]))]
        for s, chunk in enumerate(np.array_split(order, k)):
            assignment[chunk] = s

    sectors = tuple(tuple(np.flatnonzero(assignment == s).tolist()) for s in range(k))
    assignment.setflags(write=False)
    return SectorPartition(sectors, assignment)

"""Scripted baselines: Follow Me, Pick-Don't-Move and a masked random policy.

A policy exposes ``reset(env, seed)`` and ``act(env) -> list[int | None]``;
``check_masks`` tells the runner whether its targets must respect the
learned-policy action masks.  Scripted pickers move to places the masks do
not cover (zone centroids, route stops ahead of the AGVs), so the heuristics
run with the check disabled.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import agents
from .pathing import PathCache
from .warehouse import partition_sectors


class RouteError(ValueError):
    pass


@dataclass
class Route:
    nodes: list[int]
    cursor: int = 0

    def length(self, dist: np.ndarray) -> float:
        return float(sum(dist[a, b] for a, b in zip(self.nodes, self.nodes[1:])))

    @property
    def stops(self) -> list[int]:
        return self.nodes[1:]


def open_tour_length(tour: list[int], dist: np.ndarray) -> float:
    return float(sum(dist[a, b] for a, b in zip(tour, tour[1:])))


def nearest_neighbor_tour(required: list[int], start: int, dist: np.ndarray) -> list[int]:
    tour = [start]
    left = sorted(set(required))
    here = start
    while left:
        nxt = min(left, key=lambda n: (dist[here, n], n))
        left.remove(nxt)
        tour.append(nxt)
        here = nxt
    return tour


def two_opt(tour: list[int], dist: np.ndarray) -> list[int]:
    """Segment-reversal local search on an open tour with a fixed first node."""
    tour = list(tour)
    n = len(tour)
    improved = True
    while improved:
        improved = False
        for i in range(1, n - 1):
            for j in range(i + 1, n):
                a, b = tour[i - 1], tour[i]
                c = tour[j]
                before = dist[a, b]
                after = dist[a, c]
                if j + 1 < n:
                    d = tour[j + 1]
                    before += dist[c, d]
                    after += dist[b, d]
                if after < before - 1e-12:
                    tour[i:j + 1] = tour[i:j + 1][::-1]
                    improved = True
    return tour


def tsp_route(required, start: int, cache: PathCache) -> Route:
    required = sorted(set(int(r) for r in required))
    if not required:
        raise RouteError("nothing to visit")
    dist = cache.dist
    if not np.all(np.isfinite(dist[start, required])):
        raise RouteError("route contains an unreachable node")
    return Route(two_opt(nearest_neighbor_tour(required, start, dist), dist))


def nearest_station(env, node: int) -> int:
    stations = env.warehouse.stations
    d = env.cache.dist[node, stations]
    return int(stations[np.argmin(d)])


def _hold_or(target: int, w) -> int | None:
    return None if target == w.current else target


class RandomPolicy:
    """Uniform choice among the legal (masked) locations."""

    check_masks = True

    def __init__(self, seed: int | None = None):
        self.rng = np.random.default_rng(seed)

    def reset(self, env, seed: int | None = None) -> None:
        if seed is not None:
            self.rng = np.random.default_rng([seed, 0x5EED])

    def act(self, env) -> list[int | None]:
        state = env.state
        actions: list[int | None] = [None] * env.num_agents
        pending = None
        for w in state.workers:
            if w.id == env.num_agvs:
                pending = agents.agv_choices(state, actions)
            if not w.committed:
                legal = np.flatnonzero(agents.action_mask(state, w.id, pending=pending))
                actions[w.id] = int(legal[self.rng.integers(len(legal))])
        return actions


class FollowMePolicy:
    """AGVs are tied round-robin to pickers and trail them along a shared route.

    Each picker walks a TSP route over the concatenated remaining lines of its
    AGVs; every AGV heads to the first route stop holding one of its own items.
    The route is rebuilt whenever that concatenated line set changes.
    """

    check_masks = False

    def reset(self, env, seed: int | None = None) -> None:
        p = env.spec.num_pickers
        self.team = {v: env.num_agvs + v % p for v in range(env.num_agvs)}
        self.routes: dict[int, list[int]] = {}
        self.keys: dict[int, frozenset] = {}

    def act(self, env) -> list[int | None]:
        state = env.state
        workers = state.workers
        actions: list[int | None] = [None] * env.num_agents
        for pid in range(env.num_agvs, env.num_agents):
            members = [v for v, p in self.team.items() if p == pid]
            needs: dict[int, set[int]] = {}
            for v in members:
                order = workers[v].order
                if order is not None:
                    for item in order.remaining_items():
                        needs.setdefault(item, set()).add(v)
            key = frozenset((v, s) for s, vs in needs.items() for v in vs)
            picker = workers[pid]
            if key != self.keys.get(pid):
                self.keys[pid] = key
                self.routes[pid] = tsp_route(needs, picker.target, env.cache).stops if needs else []
            stops = [s for s in self.routes[pid] if s in needs]

            if not picker.committed and stops:
                actions[pid] = _hold_or(stops[0], picker)

            for v in members:
                w = workers[v]
                if w.committed or w.order is None:
                    continue
                if not w.order.remaining:
                    actions[v] = _hold_or(nearest_station(env, w.current), w)
                    continue
                own = next(s for s in stops if v in needs[s])
                actions[v] = _hold_or(own, w)
        return actions


class PickDontMovePolicy:
    """Pickers own zones; AGVs roam the whole warehouse on their own TSP tour.

    A picker serves the AGV (targeting a slot in its zone) with the smallest
    bottleneck arrival time, max(picker travel time, AGV remaining travel
    time); an idle picker waits at its zone centroid.
    """

    check_masks = False

    def __init__(self, idle_at_centroid: bool = True):
        self.idle_at_centroid = idle_at_centroid

    def reset(self, env, seed: int | None = None) -> None:
        wh = env.warehouse
        p = env.spec.num_pickers
        part = partition_sectors(wh, p)
        slots = wh.item_slots
        self.zone_of = np.asarray(part.assignment)[slots]
        self.centroids = []
        for z in range(p):
            members = slots[self.zone_of == z]
            mean = wh.positions[members].mean(axis=0)
            d = np.linalg.norm(wh.positions[members] - mean, axis=1)
            self.centroids.append(int(members[np.argmin(d)]))
        self.tours: dict[int, tuple[object, list[int]]] = {}

    def _agv_target(self, env, w) -> int | None:
        order = w.order
        if order is None:
            return None
        if not order.remaining:
            return nearest_station(env, w.current)
        cached = self.tours.get(w.id)
        if cached is None or cached[0] is not order:
            cached = (order, tsp_route(order.remaining_items(), w.current, env.cache).stops)
            self.tours[w.id] = cached
        left = set(order.remaining_items())
        return next(s for s in cached[1] if s in left)

    def act(self, env) -> list[int | None]:
        state = env.state
        workers = state.workers
        dist = env.cache.dist
        speed = env.spec.speed
        actions: list[int | None] = [None] * env.num_agents

        heading: dict[int, tuple[int, float]] = {}
        for w in workers[: env.num_agvs]:
            if w.committed:
                target, eta = w.target, w.remaining_distance / speed
            else:
                target = self._agv_target(env, w)
                if target is None:
                    continue
                actions[w.id] = _hold_or(target, w)
                eta = dist[w.current, target] / speed
            if w.order is not None and target < env.warehouse.n_items and target in w.order.remaining_items():
                heading[w.id] = (target, eta)

        for pid in range(env.num_agvs, env.num_agents):
            picker = workers[pid]
            if picker.committed:
                continue
            zone = pid - env.num_agvs
            best = None
            for v, (target, eta) in heading.items():
                if self.zone_of[target] != zone:
                    continue
                prio = (max(dist[picker.current, target] / speed, eta), v)
                if best is None or prio < best[0]:
                    best = (prio, target)
            if best is not None:
                actions[pid] = _hold_or(best[1], picker)
            elif self.idle_at_centroid:
                actions[pid] = _hold_or(self.centroids[zone], picker)
        return actions


POLICIES = {
    "fm": FollowMePolicy,
    "pdm": PickDontMovePolicy,
    "random": RandomPolicy,
}

"""Tick-based order-picking simulator with a gym-style ``reset``/``step``.

Each tick lasts ``tick_seconds`` of simulated time.  Within a tick:

1. uncommitted agents adopt their chosen target and commit to the cached
   shortest path;
2. committed agents advance ``speed * tick_seconds`` metres, possibly arriving;
3. every item slot with an arrived picker and an arrived AGV that still needs
   the slot's item transfers the line instantly;
4. AGVs with a finished order standing at a delivery station complete it and
   take the next order from the FIFO queue;
5. per-agent rewards are issued.
"""

from __future__ import annotations

import bisect
import json
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from . import agents
from .pathing import PathCache, SpatialIndex, precompute
from .warehouse import (
    InvalidParameter,
    LocationKind,
    Order,
    OrderProfile,
    Role,
    WarehouseGraph,
    WorkerSpec,
    sample_order,
)

ARRIVAL_TOL = 1e-9


class ContractViolation(RuntimeError):
    """An action broke the commitment or masking contract."""


@dataclass(frozen=True)
class EngineConfig:
    tick_seconds: float = 5.0
    orders_per_episode: int = 80
    max_ticks: int = 20_000

    def __post_init__(self):
        if self.tick_seconds <= 0:
            raise InvalidParameter("tick_seconds must be positive")
        if self.orders_per_episode < 1:
            raise InvalidParameter("orders_per_episode must be >= 1")
        if self.max_ticks < 1:
            raise InvalidParameter("max_ticks must be >= 1")


class WorkerState:
    __slots__ = ("id", "role", "current", "target", "path", "cum", "progress",
                 "committed", "order", "order_start")

    def __init__(self, id: int, role: Role, node: int):
        self.id = id
        self.role = role
        self.current = node
        self.target = node
        self.path: list[int] = [node]
        self.cum: list[float] = [0.0]
        self.progress = 0.0
        self.committed = False
        self.order: Order | None = None
        self.order_start = 0.0

    @property
    def remaining_distance(self) -> float:
        return self.cum[-1] - self.progress

    def snapshot(self) -> tuple:
        order = None
        if self.order is not None:
            order = (tuple((ln.item, ln.quantity) for ln in self.order.lines),
                     tuple(sorted(self.order.remaining)))
        return (self.id, int(self.role), self.current, self.target, tuple(self.path),
                self.progress, self.committed, order, self.order_start)


@dataclass
class MetricsAccumulator:
    distance: np.ndarray
    idle_ticks: np.ndarray
    lines_picked: int = 0
    lead_times: list[float] = field(default_factory=list)

    @classmethod
    def zeros(cls, n: int) -> MetricsAccumulator:
        return cls(np.zeros(n), np.zeros(n, dtype=np.int64))


@dataclass(frozen=True)
class MetricsReport:
    pick_rate: float
    agv_distance_m: float
    picker_distance_m: float
    agv_idle_s: float
    picker_idle_s: float
    mean_lead_time_s: float
    lines_picked: int
    orders_completed: int
    ticks: int
    clock_s: float

    def row(self) -> dict[str, float]:
        return {
            "pick_rate_lines_per_hour": self.pick_rate,
            "agv_distance_m": self.agv_distance_m,
            "picker_distance_m": self.picker_distance_m,
            "agv_idle_s": self.agv_idle_s,
            "picker_idle_s": self.picker_idle_s,
            "mean_lead_time_s": self.mean_lead_time_s,
        }


@dataclass
class SimState:
    warehouse: WarehouseGraph
    workers: list[WorkerState]
    queue: deque
    total_orders: int
    metrics: MetricsAccumulator
    rng: np.random.Generator
    tick_seconds: float
    num_agvs: int
    tick: int = 0
    completed: int = 0
    done: bool = False

    @property
    def clock(self) -> float:
        return self.tick * self.tick_seconds

    @property
    def in_flight(self) -> int:
        return sum(1 for w in self.workers[: self.num_agvs] if w.order is not None)

    def snapshot(self) -> tuple:
        """Hashable summary of everything that evolves during an episode."""
        queue = tuple(tuple(ln.item for ln in o.lines) for o in self.queue)
        m = self.metrics
        return (self.tick, self.completed, self.done, queue,
                tuple(w.snapshot() for w in self.workers),
                m.distance.tobytes(), m.idle_ticks.tobytes(), m.lines_picked, tuple(m.lead_times))


class OrderPickingEnv:
    """Multi-agent environment; agents ``0..|V|-1`` are AGVs, the rest pickers."""

    def __init__(
        self,
        warehouse: WarehouseGraph,
        workers: WorkerSpec,
        profile: OrderProfile,
        config: EngineConfig = EngineConfig(),
        cache: PathCache | None = None,
        index: SpatialIndex | None = None,
        record_events: bool = False,
    ):
        if profile.n_items != warehouse.n_items:
            raise InvalidParameter("order profile and warehouse disagree on item count")
        self.warehouse = warehouse
        self.spec = workers
        self.profile = profile
        self.config = config
        self.cache = cache if cache is not None else precompute(warehouse)
        self.index = index if index is not None else SpatialIndex(warehouse.positions)
        self.record_events = record_events
        self.starts = workers.resolve_starts(warehouse)
        self.is_station = warehouse.kinds == LocationKind.DELIVERY_STATION
        self.state: SimState | None = None
        self.events: list[dict] = []

    @property
    def num_agents(self) -> int:
        return self.spec.num_agents

    @property
    def num_agvs(self) -> int:
        return self.spec.num_agvs

    def role(self, i: int) -> Role:
        return Role.AGV if i < self.spec.num_agvs else Role.PICKER

    def reset(self, seed: int | None = None) -> list[np.ndarray]:
        rng = np.random.default_rng(seed)
        orders = [sample_order(self.profile, rng) for _ in range(self.config.orders_per_episode)]
        workers = [WorkerState(i, self.role(i), s) for i, s in enumerate(self.starts)]
        queue = deque(orders)
        self.events = []
        self.state = SimState(
            warehouse=self.warehouse,
            workers=workers,
            queue=queue,
            total_orders=len(orders),
            metrics=MetricsAccumulator.zeros(len(workers)),
            rng=rng,
            tick_seconds=self.config.tick_seconds,
            num_agvs=self.spec.num_agvs,
        )
        for w in workers[: self.spec.num_agvs]:
            self._assign_next(w)
        return self.observations()

    def observations(self) -> list[np.ndarray]:
        return [agents.observe(self.state, i) for i in range(self.num_agents)]

    def _log(self, agent: int, event: str, location: int, **extra) -> None:
        if self.record_events:
            self.events.append({"tick": self.state.tick, "agent": agent, "event": event,
                                "location": int(location), **extra})

    def _assign_next(self, w: WorkerState, clock: float = 0.0) -> None:
        state = self.state
        if state.queue:
            w.order = state.queue.popleft()
            w.order_start = clock
            self._log(w.id, "assign", w.current)
        else:
            w.order = None

    def _commit(self, w: WorkerState, target: int) -> None:
        path = self.cache.shortest_path(w.current, target)
        row = self.cache.dist[w.current]
        w.target = target
        w.path = path
        w.cum = [float(row[n]) for n in path]
        w.progress = 0.0
        w.committed = True
        self._log(w.id, "commit", target)

    def _advance(self, w: WorkerState, budget: float) -> float:
        remaining = w.cum[-1] - w.progress
        if remaining - budget < ARRIVAL_TOL:
            w.progress = w.cum[-1]
            w.current = w.target
            w.committed = False
            self._log(w.id, "arrive", w.target)
            return remaining
        w.progress += budget
        j = bisect.bisect_right(w.cum, w.progress) - 1
        a, b = w.path[j], w.path[j + 1]
        frac = (w.progress - w.cum[j]) / (w.cum[j + 1] - w.cum[j])
        pos = self.warehouse.positions
        w.current = self.index.nearest_node(pos[a] + frac * (pos[b] - pos[a]))
        return budget

    def validate(self, actions, check_masks: bool = True) -> None:
        if len(actions) != self.num_agents:
            raise ContractViolation(f"expected {self.num_agents} actions, got {len(actions)}")
        n = len(self.warehouse)
        pending = None
        for i, (w, a) in enumerate(zip(self.state.workers, actions)):
            if i == self.num_agvs and check_masks:
                pending = agents.agv_choices(self.state, actions)
            if a is None:
                if check_masks and not w.committed:
                    raise ContractViolation(f"agent {i} is uncommitted and must choose a target")
                continue
            if w.committed:
                raise ContractViolation(f"agent {i} is committed to {w.target}; only no-op allowed")
            if not 0 <= a < n:
                raise ContractViolation(f"agent {i} chose unknown location {a}")
            if check_masks and not agents.action_mask(self.state, i, pending=pending)[a]:
                raise ContractViolation(f"agent {i} chose masked location {a}")

    def step(self, actions, check_masks: bool = True, observe: bool = True):
        """Advance one tick.

        ``actions[i]`` is a target location id for an uncommitted agent and
        ``None`` otherwise.  With ``check_masks=False`` (scripted policies),
        uncommitted agents may also pass ``None`` to hold position and targets
        are not checked against the learned-policy masks.  Picker targets are
        checked against masks that already include this tick's AGV choices.
        """
        state = self.state
        if state is None:
            raise ContractViolation("reset() must be called before step()")
        if state.done:
            raise ContractViolation("episode is over; call reset()")
        self.validate(actions, check_masks)

        workers = state.workers
        metrics = state.metrics
        for w, a in zip(workers, actions):
            if a is not None:
                self._commit(w, int(a))

        budget = self.spec.speed * self.config.tick_seconds
        moved = np.zeros(len(workers))
        for w in workers:
            if w.committed:
                moved[w.id] = self._advance(w, budget)
        metrics.distance += moved

        events = agents.TickEvents()
        n_items = self.warehouse.n_items
        pickers_at: dict[int, list[int]] = {}
        for w in workers[self.num_agvs:]:
            if not w.committed and w.current < n_items:
                pickers_at.setdefault(w.current, []).append(w.id)
        for w in workers[: self.num_agvs]:
            if w.committed or w.order is None or w.current not in pickers_at:
                continue
            n_lines = w.order.pick_item(w.current)
            if n_lines:
                picker = min(pickers_at[w.current])
                events.picked.add(picker)
                events.received.add(w.id)
                metrics.lines_picked += n_lines
                self._log(picker, "pick", w.current, agv=w.id, lines=n_lines)

        clock_after = state.clock + self.config.tick_seconds
        for w in workers[: self.num_agvs]:
            if (not w.committed and w.order is not None and not w.order.remaining
                    and self.is_station[w.current]):
                events.completed.add(w.id)
                state.completed += 1
                metrics.lead_times.append(clock_after - w.order_start)
                self._log(w.id, "complete", w.current)
                self._assign_next(w, clock_after)

        rewards = np.array([agents.reward(w.role, events, w.id) for w in workers])
        active = events.picked | events.received | events.completed
        for w in workers:
            if moved[w.id] == 0.0 and w.id not in active:
                metrics.idle_ticks[w.id] += 1

        state.tick += 1
        state.done = state.completed == state.total_orders or state.tick >= self.config.max_ticks
        info = {"picks": len(events.received), "completed": len(events.completed), "events": events}
        obs = self.observations() if observe else None
        return obs, rewards, state.done, info

    def write_events(self, fh) -> None:
        for ev in self.events:
            fh.write(json.dumps(ev) + "\n")


def episode_metrics(state: SimState) -> MetricsReport:
    if not state.done:
        raise ContractViolation("episode metrics are only defined once the episode is done")
    return metrics_report(state)


def metrics_report(state: SimState) -> MetricsReport:
    m = state.metrics
    v = state.num_agvs
    to_real = 1.0 / state.warehouse.scale
    hours = state.clock / 3600.0
    return MetricsReport(
        pick_rate=m.lines_picked / hours if hours > 0 else 0.0,
        agv_distance_m=float(m.distance[:v].mean() * to_real),
        picker_distance_m=float(m.distance[v:].mean() * to_real),
        agv_idle_s=float(m.idle_ticks[:v].mean() * state.tick_seconds),
        picker_idle_s=float(m.idle_ticks[v:].mean() * state.tick_seconds),
        mean_lead_time_s=float(np.mean(m.lead_times)) if m.lead_times else float("nan"),
        lines_picked=m.lines_picked,
        orders_completed=state.completed,
        ticks=state.tick,
        clock_s=state.clock,
    )


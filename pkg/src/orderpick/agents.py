"""Per-agent observations, rewards and legal-action masks.

Every function here is a pure read of a ``SimState``.  Actions are location
ids over the whole graph for both roles; masks narrow them down.

Observation layout (all coordinates normalised to [0, 1]):

* location block: ``(cur_x, cur_y, tgt_x, tgt_y)`` for every agent, the
  observing agent first and the rest in id order;
* order block: multi-hot over item-slot indices, 1 = still to pick.  Pickers
  get one block per AGV (id order), AGVs only their own.

Within a tick AGVs decide before pickers.  ``pending`` maps agent id to a
target chosen earlier in the same tick; picker masks and observations read
those targets in place of the committed ones.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .warehouse import Role

PICK_REWARD = 0.1
RECEIVE_REWARD = 0.1
COMPLETE_REWARD = 0.1
STEP_PENALTY = -0.05


@dataclass
class TickEvents:
    """What each agent achieved during one engine tick."""

    picked: set[int] = field(default_factory=set)
    received: set[int] = field(default_factory=set)
    completed: set[int] = field(default_factory=set)


def _agent_order(n: int, ego: int | None) -> list[int]:
    if ego is None:
        return list(range(n))
    return [ego] + [j for j in range(n) if j != ego]


def _targets(state, pending: dict[int, int] | None) -> np.ndarray:
    tgt = np.fromiter((w.target for w in state.workers), dtype=np.int64, count=len(state.workers))
    if pending:
        for i, t in pending.items():
            tgt[i] = t
    return tgt


def location_block(state, ego: int | None = None, pending: dict[int, int] | None = None) -> np.ndarray:
    norm = state.warehouse.normalized_positions
    cur = np.fromiter((w.current for w in state.workers), dtype=np.int64, count=len(state.workers))
    tgt = _targets(state, pending)
    idx = _agent_order(len(state.workers), ego)
    return np.concatenate([norm[cur[idx]], norm[tgt[idx]]], axis=1).ravel()


def order_vector(state, v: int) -> np.ndarray:
    out = np.zeros(state.warehouse.n_items)
    order = state.workers[v].order
    if order is not None:
        for i in order.remaining:
            out[order.lines[i].item] = 1.0
    return out


def picker_observation(state, i: int, ego: bool = True, pending: dict[int, int] | None = None) -> np.ndarray:
    orders = [order_vector(state, v) for v in range(state.num_agvs)]
    return np.concatenate([location_block(state, i if ego else None, pending), *orders])


def global_observation(state, pending: dict[int, int] | None = None) -> np.ndarray:
    """Picker layout without the ego rotation; the manager's input."""
    return picker_observation(state, 0, ego=False, pending=pending)


def agv_observation(state, v: int) -> np.ndarray:
    return np.concatenate([location_block(state, v), order_vector(state, v)])


def observe(state, i: int, pending: dict[int, int] | None = None) -> np.ndarray:
    if state.workers[i].role == Role.AGV:
        return agv_observation(state, i)
    return picker_observation(state, i, pending=pending)


def observation_size(role: Role, n_agents: int, n_agvs: int, n_items: int) -> int:
    blocks = n_agvs if role == Role.PICKER else 1
    return 4 * n_agents + blocks * n_items


def reward(role: Role, events: TickEvents, i: int) -> float:
    if role == Role.PICKER:
        return PICK_REWARD if i in events.picked else STEP_PENALTY
    if i in events.received:
        return RECEIVE_REWARD
    if i in events.completed:
        return COMPLETE_REWARD
    return STEP_PENALTY


def agv_mask(state, v: int, sector: np.ndarray | None = None) -> np.ndarray:
    """Slots of the AGV's remaining items; stations once the order is done.

    An AGV with no order at all (queue exhausted) may only stay put.  A
    sector-scoped mask can come back empty; callers must check.
    """
    wh = state.warehouse
    w = state.workers[v]
    mask = np.zeros(len(wh), dtype=bool)
    if w.order is None:
        mask[w.current] = True
        return mask if sector is None else mask & _sector_mask(len(wh), sector)
    if w.order.remaining:
        mask[[w.order.lines[i].item for i in w.order.remaining]] = True
    else:
        mask[wh.stations] = True
    if sector is not None:
        mask &= _sector_mask(len(wh), sector)
    return mask


def picker_mask(state, p: int, sector: np.ndarray | None = None,
                pending: dict[int, int] | None = None) -> np.ndarray:
    """Item slots that are the current or target location of some AGV.

    Falls back to the picker's own location when nothing qualifies.
    """
    wh = state.warehouse
    mask = np.zeros(len(wh), dtype=bool)
    tgt = _targets(state, pending)
    for w in state.workers[: state.num_agvs]:
        mask[w.current] = True
        mask[tgt[w.id]] = True
    mask[wh.n_items:] = False
    if sector is not None:
        mask &= _sector_mask(len(wh), sector)
    if not mask.any():
        mask[state.workers[p].current] = True
    return mask


def action_mask(state, i: int, sector: np.ndarray | None = None,
                pending: dict[int, int] | None = None) -> np.ndarray:
    if state.workers[i].role == Role.AGV:
        return agv_mask(state, i, sector)
    return picker_mask(state, i, sector, pending)


def agv_choices(state, actions) -> dict[int, int]:
    """Targets the AGVs pick this tick, as the ``pending`` map for pickers."""
    return {i: int(a) for i, a in enumerate(actions[: state.num_agvs])
            if a is not None and not state.workers[i].committed}


def _sector_mask(n: int, sector: np.ndarray) -> np.ndarray:
    m = np.zeros(n, dtype=bool)
    m[sector] = True
    return m

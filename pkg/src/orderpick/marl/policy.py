"""Hierarchical (HSNAC) and flat (SNAC) policies over shared worker networks.

In the hierarchical variant a manager network, one policy/value head per
agent, picks a sector for every agent that needs a new target; the agent's
role network then picks a location inside that sector.  Sectors offered to
the manager are only those containing at least one legal location, so the
worker's scoped mask is never empty.  Path following below that is scripted
by the simulator.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .. import agents
from ..warehouse import Role, partition_sectors
from .nets import Mlp, forward


@dataclass
class Decision:
    agent: int
    role: Role
    obs: np.ndarray
    mask: np.ndarray
    action: int
    value: float
    m_obs: np.ndarray | None = None
    m_mask: np.ndarray | None = None
    sector: int = -1
    m_value: float = 0.0
    reward: float = 0.0
    duration: int = 0
    discount: float = 1.0
    done: bool = False

    def add_reward(self, r: float, gamma: float) -> None:
        self.reward += self.discount * r
        self.discount *= gamma
        self.duration += 1


def sample_masked(probs: np.ndarray, rng: np.random.Generator, greedy: bool = False) -> np.ndarray:
    if greedy:
        return probs.argmax(axis=1)
    cum = np.cumsum(probs, axis=1)
    u = rng.random(len(probs)) * cum[:, -1]
    idx = (cum <= u[:, None]).sum(axis=1)
    return np.minimum(idx, probs.shape[1] - 1)


class PolicySet:
    def __init__(self, env, hierarchical: bool = True, sectors: int = 2,
                 worker_hidden=(64, 64), manager_hidden=(128, 128, 128), seed: int = 0):
        wh = env.warehouse
        rng = np.random.default_rng([seed, 0xC0FFEE])
        self.hierarchical = hierarchical
        self.n_agents = env.num_agents
        self.n_agvs = env.num_agvs
        self.n_locations = len(wh)
        n_items = wh.n_items
        k = sectors if hierarchical else 0
        self.k = k
        agv_in = agents.observation_size(Role.AGV, self.n_agents, self.n_agvs, n_items)
        picker_in = agents.observation_size(Role.PICKER, self.n_agents, self.n_agvs, n_items)
        self.agv_net = Mlp(agv_in + k, worker_hidden, self.n_locations, 1, rng)
        self.picker_net = Mlp(picker_in + k, worker_hidden, self.n_locations, 1, rng)
        self.manager: Mlp | None = None
        self.partition = None
        if hierarchical:
            self.partition = partition_sectors(wh, sectors)
            self.sector_masks = np.zeros((k, self.n_locations), dtype=bool)
            for s in range(k):
                self.sector_masks[s, self.partition.members(s)] = True
            self.manager = Mlp(picker_in, manager_hidden, k, self.n_agents, rng)

    def nets(self) -> dict[str, Mlp]:
        out = {"agv": self.agv_net, "picker": self.picker_net}
        if self.manager is not None:
            out["manager"] = self.manager
        return out

    def role_net(self, role: Role) -> Mlp:
        return self.agv_net if role == Role.AGV else self.picker_net

    def effective_action_bound(self) -> int:
        if not self.hierarchical:
            return self.n_locations
        return int(self.sector_masks.sum(axis=1).max())

    def decide(self, state, rng: np.random.Generator, greedy: bool = False) -> list[Decision]:
        """Decisions for every uncommitted agent, AGVs first, then pickers.

        Pickers see the targets the AGVs have just chosen, both in their
        masks and observations.
        """
        decisions: list[Decision] = []
        pending: dict[int, int] = {}
        for role in (Role.AGV, Role.PICKER):
            deciders = [w for w in state.workers if w.role == role and not w.committed]
            if not deciders:
                continue
            view = pending if role == Role.PICKER else None
            masks = [agents.action_mask(state, w.id, pending=view) for w in deciders]
            obs = [agents.observe(state, w.id, pending=view) for w in deciders]
            sectors = [-1] * len(deciders)
            m_values = [0.0] * len(deciders)
            m_obs = None
            m_masks: list[np.ndarray | None] = [None] * len(deciders)

            if self.hierarchical:
                m_obs = agents.global_observation(state, view)
                m_mask = np.stack([(self.sector_masks & f[None, :]).any(axis=1) for f in masks])
                heads = np.array([w.id for w in deciders])
                probs, vals = forward(self.manager, np.repeat(m_obs[None, :], len(deciders), 0), m_mask, heads)
                sectors = sample_masked(probs, rng, greedy).tolist()
                m_values = vals.tolist()
                m_masks = list(m_mask)
                masks = [f & self.sector_masks[s] for f, s in zip(masks, sectors)]
                onehots = np.eye(self.k)
                obs = [np.concatenate([o, onehots[s]]) for o, s in zip(obs, sectors)]

            probs, vals = forward(self.role_net(role), np.stack(obs), np.stack(masks))
            acts = sample_masked(probs, rng, greedy)
            for j, w in enumerate(deciders):
                decisions.append(Decision(
                    agent=w.id, role=role, obs=obs[j], mask=masks[j], action=int(acts[j]),
                    value=float(vals[j]), m_obs=m_obs, m_mask=m_masks[j], sector=sectors[j],
                    m_value=m_values[j]))
                if role == Role.AGV:
                    pending[w.id] = int(acts[j])
        return decisions

    def act(self, state, rng: np.random.Generator, greedy: bool = False):
        decisions = self.decide(state, rng, greedy)
        actions: list[int | None] = [None] * self.n_agents
        for d in decisions:
            actions[d.agent] = d.action
        return actions, decisions

    def state_arrays(self) -> dict[str, np.ndarray]:
        return {f"{name}.{k}": v for name, net in self.nets().items() for k, v in net.params.items()}

    def load_arrays(self, arrays) -> None:
        loaded = {}
        for name, net in self.nets().items():
            for k, v in net.params.items():
                key = f"{name}.{k}"
                if key not in arrays or arrays[key].shape != v.shape:
                    raise ValueError(f"checkpoint parameter {key} is missing or has the wrong shape")
                loaded[key] = np.array(arrays[key])
        for name, net in self.nets().items():
            for k in net.params:
                net.params[k] = loaded[f"{name}.{k}"]


class LearnedPolicy:
    """Runner adapter: samples (or argmaxes) a ``PolicySet`` with a seeded rng."""

    check_masks = True

    def __init__(self, policy_set: PolicySet, greedy: bool = False):
        self.policy_set = policy_set
        self.greedy = greedy
        self.rng = np.random.default_rng(0)

    def reset(self, env, seed: int | None = None) -> None:
        self.rng = np.random.default_rng([0 if seed is None else seed, 0xACE])

    def act(self, env):
        return self.policy_set.act(env.state, self.rng, self.greedy)[0]

"""Synchronous advantage actor-critic training for HSNAC and SNAC.

Every agent's decisions form a stream.  A decision's reward is the
discounted sum of the per-tick rewards from its commitment until the same
agent's next decision, so a stream behaves like a semi-MDP trajectory.
Rollouts run ``n_envs`` episodes side by side; every ``rollout_ticks`` ticks
all closed decisions go into one update per network.  The manager is credited
with exactly the reward stream of the agent it directed.
"""

from __future__ import annotations

import hashlib
import json
import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from ..engine import OrderPickingEnv
from ..evaluation import evaluate
from ..warehouse import Role
from .advantages import gae, standardize
from .nets import Adam, NonFiniteLoss, loss_and_grads
from .policy import Decision, LearnedPolicy, PolicySet

logger = logging.getLogger(__name__)

EVAL_SEED_BASE = 1_000_000


class ConfigMismatch(RuntimeError):
    pass


@dataclass
class TrainConfig:
    algorithm: str = "hsnac"
    episodes: int = 1000
    n_envs: int = 4
    rollout_ticks: int = 16
    gamma: float = 0.99
    gae_lambda: float = 0.95
    lr: float = 3e-4
    entropy_coef: float = 0.01
    value_coef: float = 0.5
    max_grad_norm: float = 0.5
    eval_interval: int = 50
    eval_episodes: int = 5
    checkpoint_interval: int = 0
    seed: int = 0
    worker_hidden: tuple[int, ...] = (64, 64)
    manager_hidden: tuple[int, ...] = (128, 128, 128)

    def __post_init__(self):
        if self.algorithm not in ("hsnac", "snac"):
            raise ValueError(f"unknown algorithm {self.algorithm!r}")
        if not (0 <= self.gamma <= 1 and 0 <= self.gae_lambda <= 1):
            raise ValueError("gamma and gae_lambda must lie in [0, 1]")
        if self.episodes < 1 or self.n_envs < 1 or self.rollout_ticks < 1 or self.eval_interval < 1:
            raise ValueError("episodes, n_envs, rollout_ticks and eval_interval must be >= 1")
        self.worker_hidden = tuple(self.worker_hidden)
        self.manager_hidden = tuple(self.manager_hidden)


@dataclass
class CurvePoint:
    episode: int
    pick_rate: float
    mean_reward: float
    policy_loss: float
    value_loss: float
    entropy: float


@dataclass
class TrainResult:
    policy: PolicySet
    curve: list[CurvePoint] = field(default_factory=list)
    episodes: int = 0


def config_hash(payload: dict) -> str:
    blob = json.dumps(payload, sort_keys=True, default=str).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def _clone_env(env: OrderPickingEnv) -> OrderPickingEnv:
    return OrderPickingEnv(env.warehouse, env.spec, env.profile, env.config, env.cache, env.index)


class Trainer:
    def __init__(self, env: OrderPickingEnv, sectors: int, config: TrainConfig, meta: dict | None = None):
        self.env = env
        self.meta = dict(meta or {})
        self.config = config
        self.policy = PolicySet(env, hierarchical=config.algorithm == "hsnac", sectors=sectors,
                                worker_hidden=config.worker_hidden,
                                manager_hidden=config.manager_hidden, seed=config.seed)
        self.optims = {name: Adam(net.params, config.lr, max_grad_norm=config.max_grad_norm)
                       for name, net in self.policy.nets().items()}
        self.rng = np.random.default_rng([config.seed, 0x7EA1])
        self.episodes_done = 0
        self.last_terms: dict[str, float] = {"policy_loss": float("nan"), "value_loss": float("nan"),
                                             "entropy": float("nan")}

    def train_seed(self, episode: int) -> int:
        return self.config.seed * 1_000_003 + episode

    # -- update ---------------------------------------------------------
    def _collect(self, streams: list[list[Decision]]):
        cfg = self.config
        batches: dict[str, list] = {"agv": [], "picker": [], "manager": []}
        for stream in streams:
            if not stream:
                continue
            last = stream[-1]
            closed = stream if last.done else stream[:-1]
            if not closed:
                continue
            boot = 0.0 if last.done else last.value
            m_boot = 0.0 if last.done else last.m_value
            rewards = [d.reward for d in closed]
            dones = [d.done for d in closed]
            durations = [d.duration for d in closed]
            adv, ret = gae(rewards, [d.value for d in closed] + [boot], dones,
                           cfg.gamma, cfg.gae_lambda, durations)
            role = "agv" if closed[0].role == Role.AGV else "picker"
            batches[role].extend(zip(closed, adv, ret))
            if self.policy.hierarchical:
                m_adv, m_ret = gae(rewards, [d.m_value for d in closed] + [m_boot], dones,
                                   cfg.gamma, cfg.gae_lambda, durations)
                batches["manager"].extend(zip(closed, m_adv, m_ret))
            del stream[: len(closed)]
        return batches

    def update(self, streams: list[list[Decision]]) -> None:
        cfg = self.config
        batches = self._collect(streams)
        terms_acc: dict[str, list[float]] = {}
        for name, net in self.policy.nets().items():
            batch = batches[name]
            if len(batch) < 2:
                continue
            decs, adv, ret = zip(*batch)
            adv = standardize(np.array(adv))
            if name == "manager":
                x = np.stack([d.m_obs for d in decs])
                mask = np.stack([d.m_mask for d in decs])
                acts = [d.sector for d in decs]
                heads = np.array([d.agent for d in decs])
            else:
                x = np.stack([d.obs for d in decs])
                mask = np.stack([d.mask for d in decs])
                acts = [d.action for d in decs]
                heads = None
            try:
                terms, grads = loss_and_grads(net, x, acts, adv, np.array(ret), mask, heads,
                                              cfg.value_coef, cfg.entropy_coef)
            except NonFiniteLoss as exc:
                raise NonFiniteLoss(f"{name} update aborted after {self.episodes_done} episodes: {exc}") from exc
            self.optims[name].step(net.params, grads)
            for k, v in terms.items():
                terms_acc.setdefault(k, []).append(v)
        if terms_acc:
            self.last_terms = {k: float(np.mean(terms_acc[k])) for k in ("policy_loss", "value_loss", "entropy")}

    # -- evaluation -----------------------------------------------------
    def evaluate(self, episodes: int | None = None, greedy: bool = False) -> float:
        env = _clone_env(self.env)
        n = self.config.eval_episodes if episodes is None else episodes
        reports, agg = evaluate(env, LearnedPolicy(self.policy, greedy), n, EVAL_SEED_BASE)
        return agg["pick_rate_lines_per_hour"].mean

    # -- main loop ------------------------------------------------------
    def run(self, checkpoint_dir: str | Path | None = None, on_point=None) -> TrainResult:
        cfg = self.config
        gamma = cfg.gamma
        envs = [_clone_env(self.env) for _ in range(cfg.n_envs)]
        result = TrainResult(self.policy)
        started = self.episodes_done
        active = []
        for env in envs:
            if started < cfg.episodes:
                env.reset(self.train_seed(started))
                started += 1
                active.append(True)
            else:
                active.append(False)
        n = envs[0].num_agents
        streams = [[[] for _ in range(n)] for _ in envs]
        flat_streams = [s for per_env in streams for s in per_env]
        ep_rewards = np.zeros(len(envs))
        interval_rewards: list[float] = []

        while any(active):
            for _ in range(cfg.rollout_ticks):
                for e, env in enumerate(envs):
                    if not active[e]:
                        continue
                    actions, decisions = self.policy.act(env.state, self.rng)
                    for d in decisions:
                        streams[e][d.agent].append(d)
                    _, rewards, done, _ = env.step(actions, observe=False)
                    ep_rewards[e] += rewards.mean()
                    for i in range(n):
                        stream = streams[e][i]
                        if stream and not stream[-1].done:
                            stream[-1].add_reward(float(rewards[i]), gamma)
                    if not done:
                        continue
                    for stream in streams[e]:
                        if stream:
                            stream[-1].done = True
                    self.episodes_done += 1
                    interval_rewards.append(float(ep_rewards[e]))
                    ep_rewards[e] = 0.0
                    if started < cfg.episodes:
                        env.reset(self.train_seed(started))
                        started += 1
                    else:
                        active[e] = False
                    if self.episodes_done % cfg.eval_interval == 0:
                        self.update(flat_streams)
                        point = CurvePoint(self.episodes_done, self.evaluate(),
                                           float(np.mean(interval_rewards)), **self.last_terms)
                        interval_rewards = []
                        result.curve.append(point)
                        logger.info("episode %d pick rate %.1f", point.episode, point.pick_rate)
                        if on_point is not None:
                            on_point(point)
                    if (checkpoint_dir is not None and cfg.checkpoint_interval
                            and self.episodes_done % cfg.checkpoint_interval == 0):
                        self.save(Path(checkpoint_dir) / f"ckpt-{self.episodes_done:06d}.npz")
                if not any(active):
                    break
            self.update(flat_streams)
        result.episodes = self.episodes_done
        return result

    # -- checkpoints ----------------------------------------------------
    def save(self, path: str | Path, meta: dict | None = None) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        arrays = dict(self.policy.state_arrays())
        for name, opt in self.optims.items():
            arrays.update(opt.state_arrays(f"opt.{name}"))
        info = {"config": asdict(self.config), "episodes_done": self.episodes_done}
        info.update(self.meta)
        info.update(meta or {})
        arrays["meta"] = np.array(json.dumps(info, sort_keys=True))
        with open(path, "wb") as fh:
            np.savez(fh, **arrays)
        return path

    def load(self, path: str | Path, expect_hash: str | None = None) -> dict:
        with np.load(path) as data:
            meta = json.loads(str(data["meta"]))
            if expect_hash is not None and meta.get("config_hash") != expect_hash:
                raise ConfigMismatch(
                    f"checkpoint {path} was written for config {meta.get('config_hash')}, not {expect_hash}")
            try:
                self.policy.load_arrays(data)
            except ValueError as exc:
                raise ConfigMismatch(f"checkpoint {path} does not fit this environment: {exc}") from exc
            for name, opt in self.optims.items():
                opt.load_arrays(f"opt.{name}", data)
        self.episodes_done = int(meta.get("episodes_done", 0))
        return meta


def load_policy(env: OrderPickingEnv, path: str | Path, sectors: int) -> PolicySet:
    with np.load(path) as data:
        meta = json.loads(str(data["meta"]))
        cfg = TrainConfig(**meta["config"])
        policy = PolicySet(env, hierarchical=cfg.algorithm == "hsnac", sectors=sectors,
                           worker_hidden=cfg.worker_hidden, manager_hidden=cfg.manager_hidden,
                           seed=cfg.seed)
        try:
            policy.load_arrays(data)
        except ValueError as exc:
            raise ConfigMismatch(f"checkpoint {path} does not fit this environment: {exc}") from exc
    return policy


def train(env: OrderPickingEnv, sectors: int, config: TrainConfig, **kwargs) -> TrainResult:
    return Trainer(env, sectors, config).run(**kwargs)

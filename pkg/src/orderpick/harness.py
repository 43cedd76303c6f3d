"""Command implementations shared by the HTTP service and the CLI.

Each command takes a resolved ``ExperimentConfig``, writes its artefacts
through one ``RunWriter`` and returns a JSON-ready summary.  Episode work may
fan out to worker processes; results always come back to the parent, which is
the only process that touches the output directory.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import threading
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from .config import ExperimentConfig, output_dir
from .engine import MetricsReport, OrderPickingEnv
from .evaluation import METRIC_COLUMNS, aggregate, run_episode
from .heuristics import POLICIES, RandomPolicy
from .marl.policy import LearnedPolicy
from .marl.train import CurvePoint, TrainConfig, Trainer, load_policy
from .pathing import precompute

logger = logging.getLogger(__name__)

EPISODE_COLUMNS = ("episode", *METRIC_COLUMNS)
CURVE_COLUMNS = ("episode", "pick_rate", "mean_reward", "policy_loss", "value_loss", "entropy")


class RunWriter:
    """Single funnel for every file a command produces."""

    def __init__(self, root: str | Path):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)
        self.files: list[str] = []
        self._lock = threading.Lock()

    def path(self, name: str) -> Path:
        return self.root / name

    def text(self, name: str, content: str) -> Path:
        p = self.path(name)
        with self._lock:
            p.parent.mkdir(parents=True, exist_ok=True)
            p.write_text(content)
            if name not in self.files:
                self.files.append(name)
        return p

    def csv(self, name: str, columns, rows) -> Path:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            w.writerow([_fmt(row[c]) for c in columns])
        return self.text(name, buf.getvalue())

    def json(self, name: str, payload) -> Path:
        return self.text(name, json.dumps(payload, indent=2, sort_keys=True) + "\n")

    def record(self, name: str) -> None:
        with self._lock:
            if name not in self.files:
                self.files.append(name)

    def manifest(self, command: str, cfg: ExperimentConfig, extra: dict | None = None) -> Path:
        payload = {
            "command": command,
            "config_hash": cfg.hash(),
            "config": cfg.model_dump(exclude={"output_dir"}),
            "files": sorted(self.files),
            "version": __version__,
        }
        payload.update(extra or {})
        return self.json("manifest.json", payload)


def _fmt(value):
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return value


# -- construction --------------------------------------------------------
def build_env(cfg: ExperimentConfig, record_events: bool = False) -> OrderPickingEnv:
    wh = cfg.build_layout()
    return OrderPickingEnv(wh, cfg.worker_spec(), cfg.order_profile(wh.n_items), cfg.engine_config(),
                           cache=precompute(wh), record_events=record_events)


def make_policy(cfg: ExperimentConfig, env: OrderPickingEnv):
    if cfg.policy == "checkpoint":
        return LearnedPolicy(load_policy(env, cfg.checkpoint, cfg.sectors))
    if cfg.policy == "random":
        return RandomPolicy(cfg.seed)
    return POLICIES[cfg.policy]()


def train_config(cfg: ExperimentConfig) -> TrainConfig:
    t = cfg.training
    return TrainConfig(
        algorithm=t.algorithm, episodes=t.episodes, n_envs=t.n_envs, rollout_ticks=t.rollout_ticks,
        gamma=t.gamma, gae_lambda=t.gae_lambda, lr=t.lr, entropy_coef=t.entropy_coef,
        value_coef=t.value_coef, max_grad_norm=t.max_grad_norm, eval_interval=t.eval_interval,
        eval_episodes=t.eval_episodes, checkpoint_interval=t.checkpoint_interval, seed=cfg.seed,
        worker_hidden=tuple(t.worker_hidden), manager_hidden=tuple(t.manager_hidden))


# -- episodes ------------------------------------------------------------
_worker_env: dict = {}


def _episode_job(cfg_json: str, seed: int, record_events: bool):
    key = (cfg_json, record_events)
    if key not in _worker_env:
        cfg = ExperimentConfig.model_validate_json(cfg_json)
        env = build_env(cfg, record_events)
        _worker_env.clear()
        _worker_env[key] = (env, make_policy(cfg, env))
    env, policy = _worker_env[key]
    report = run_episode(env, policy, seed)
    return report, list(env.events)


def run_episodes(cfg: ExperimentConfig, record_events: bool = False):
    """Episodes with seeds ``seed .. seed + episodes - 1``; same results for any ``parallel``."""
    seeds = [cfg.seed + e for e in range(cfg.episodes)]
    blob = cfg.model_dump_json()
    if cfg.parallel > 1 and len(seeds) > 1:
        with ProcessPoolExecutor(max_workers=cfg.parallel) as pool:
            out = list(pool.map(_episode_job, [blob] * len(seeds), seeds, [record_events] * len(seeds)))
    else:
        env = build_env(cfg, record_events)
        policy = make_policy(cfg, env)
        out = []
        for s in seeds:
            report = run_episode(env, policy, s)
            out.append((report, list(env.events)))
    return [r for r, _ in out], [ev for _, ev in out]


def _episode_rows(reports: list[MetricsReport]) -> list[dict]:
    return [{"episode": e, **r.row()} for e, r in enumerate(reports)]


def _aggregate_rows(reports: list[MetricsReport]) -> tuple[list[dict], dict]:
    agg = aggregate(reports)
    rows = [{"metric": col, "mean": iv.mean, "ci95_low": iv.low, "ci95_high": iv.high, "n": iv.n}
            for col, iv in agg.items()]
    summary = {col: {"mean": iv.mean, "ci95_low": iv.low, "ci95_high": iv.high} for col, iv in agg.items()}
    return rows, summary


def _write_metrics(writer: RunWriter, reports, events, record_events: bool) -> dict:
    writer.csv("episodes.csv", EPISODE_COLUMNS, _episode_rows(reports))
    rows, summary = _aggregate_rows(reports)
    writer.csv("aggregate.csv", ("metric", "mean", "ci95_low", "ci95_high", "n"), rows)
    if record_events:
        lines = []
        for e, evs in enumerate(events):
            lines.extend(json.dumps({"episode": e, **ev}, sort_keys=True) for ev in evs)
        writer.text("events.jsonl", "\n".join(lines) + ("\n" if lines else ""))
    return summary


def simulate(cfg: ExperimentConfig, record_events: bool = False, command: str = "simulate") -> dict:
    reports, events = run_episodes(cfg, record_events)
    writer = RunWriter(output_dir(cfg, command))
    summary = _write_metrics(writer, reports, events, record_events)
    writer.manifest(command, cfg, {"policy": cfg.policy, "episodes": cfg.episodes})
    return {"command": command, "output_dir": str(writer.root), "config_hash": cfg.hash(),
            "policy": cfg.policy, "episodes": cfg.episodes, "aggregate": summary}


def evaluate_checkpoint(cfg: ExperimentConfig, checkpoint: str, record_events: bool = False) -> dict:
    if not Path(checkpoint).is_file():
        raise FileNotFoundError(f"checkpoint {checkpoint} does not exist")
    cfg = cfg.model_copy(update={"policy": "checkpoint", "checkpoint": str(checkpoint)})
    return simulate(cfg, record_events, command="eval")


# -- training ------------------------------------------------------------
def _latest_checkpoint(directory: Path) -> Path | None:
    found = sorted(directory.glob("ckpt-*.npz"))
    return found[-1] if found else None


def _read_curve(path: Path) -> list[CurvePoint]:
    if not path.is_file():
        return []
    with open(path, newline="") as fh:
        return [CurvePoint(int(r["episode"]), float(r["pick_rate"]), float(r["mean_reward"]),
                           float(r["policy_loss"]), float(r["value_loss"]), float(r["entropy"]))
                for r in csv.DictReader(fh)]


def train(cfg: ExperimentConfig, resume: bool = False, on_point=None) -> dict:
    env = build_env(cfg)
    writer = RunWriter(output_dir(cfg, "train"))
    ckpt_dir = writer.path("checkpoints")
    h = cfg.hash()
    trainer = Trainer(env, cfg.sectors, train_config(cfg), meta={"config_hash": cfg.checkpoint_hash()})
    curve: list[CurvePoint] = []
    resumed_from = None
    if resume:
        latest = _latest_checkpoint(ckpt_dir)
        if latest is not None:
            trainer.load(latest, expect_hash=cfg.checkpoint_hash())
            resumed_from = str(latest)
            curve = [p for p in _read_curve(writer.path("curve.csv")) if p.episode <= trainer.episodes_done]

    def point(p: CurvePoint):
        curve.append(p)
        writer.csv("curve.csv", CURVE_COLUMNS, [vars(c) for c in curve])
        if on_point is not None:
            on_point(p)

    t0 = time.perf_counter()
    trainer.run(checkpoint_dir=ckpt_dir, on_point=point)
    elapsed = time.perf_counter() - t0
    writer.csv("curve.csv", CURVE_COLUMNS, [vars(c) for c in curve])
    for p in sorted(ckpt_dir.glob("ckpt-*.npz")):
        writer.record(str(p.relative_to(writer.root)))
    final = trainer.save(writer.path("checkpoints/final.npz"))
    writer.record("checkpoints/final.npz")

    eval_cfg = cfg.model_copy(update={"policy": "checkpoint", "checkpoint": str(final)})
    reports, _ = run_episodes(eval_cfg)
    writer.csv("final_eval.csv", EPISODE_COLUMNS, _episode_rows(reports))
    _, summary = _aggregate_rows(reports)
    writer.manifest("train", cfg, {"episodes_done": trainer.episodes_done, "resumed_from": resumed_from})
    return {"command": "train", "output_dir": str(writer.root), "config_hash": h,
            "algorithm": cfg.training.algorithm, "episodes_done": trainer.episodes_done,
            "checkpoint": str(final), "curve": [vars(c) for c in curve], "final_eval": summary,
            "train_seconds": elapsed}


# -- benchmark -----------------------------------------------------------
def bench(cfg: ExperimentConfig) -> dict:
    """Timed synchronous steps of ``bench.n_envs`` environments under the random policy.

    One sample is one step of every environment, observations included.  The
    first ``bench.warmup`` samples are discarded.
    """
    b = cfg.bench
    base = build_env(cfg)
    envs = [base] + [OrderPickingEnv(base.warehouse, base.spec, base.profile, base.config,
                                     base.cache, base.index) for _ in range(b.n_envs - 1)]
    policies = [RandomPolicy() for _ in envs]
    next_seed = cfg.seed
    for env, pol in zip(envs, policies):
        env.reset(next_seed)
        pol.reset(env, next_seed)
        next_seed += 1

    durations = []
    for k in range(b.warmup + b.samples):
        t0 = time.perf_counter()
        dones = []
        for env, pol in zip(envs, policies):
            _, _, done, _ = env.step(pol.act(env))
            dones.append(done)
        dt = time.perf_counter() - t0
        if k >= b.warmup:
            durations.append(dt)
        for env, pol, done in zip(envs, policies, dones):
            if done:
                env.reset(next_seed)
                pol.reset(env, next_seed)
                next_seed += 1

    d = np.asarray(durations)
    rates = 1.0 / d
    report = {
        "n_envs": b.n_envs,
        "samples": b.samples,
        "warmup": b.warmup,
        "locations": len(base.warehouse),
        "agents": base.num_agents,
        "mean_step_seconds": float(d.mean()),
        "std_step_seconds": float(d.std(ddof=1)) if len(d) > 1 else 0.0,
        "steps_per_second": float(1.0 / d.mean()),
        "steps_per_second_std": float(rates.std(ddof=1)) if len(d) > 1 else 0.0,
        "env_steps_per_second": float(b.n_envs / d.mean()),
    }
    writer = RunWriter(output_dir(cfg, "bench"))
    writer.json("bench.json", report)
    writer.manifest("bench", cfg)
    return {"command": "bench", "output_dir": str(writer.root), "config_hash": cfg.hash(), **report}


# -- layout --------------------------------------------------------------
def layout_payload(cfg: ExperimentConfig) -> dict:
    wh = cfg.build_layout()
    return {
        "layout_hash": wh.layout_hash,
        "scale": wh.scale,
        "nodes": [{"id": loc.id, "kind": loc.kind.name.lower(), "x": loc.position[0],
                   "y": loc.position[1], "item": loc.item} for loc in wh.locations],
        "edges": [{"u": u, "v": v, "length": w} for u, v, w in wh.edges],
    }


def export_layout(cfg: ExperimentConfig, fmt: str = "json") -> dict:
    if fmt not in ("json", "text"):
        raise ValueError(f"unknown layout format {fmt!r}")
    writer = RunWriter(output_dir(cfg, "export-layout"))
    if fmt == "json":
        payload = layout_payload(cfg)
        path = writer.json("layout.json", payload)
        layout_hash = payload["layout_hash"]
    else:
        wh = cfg.build_layout()
        path = writer.text("layout.txt", wh.to_text())
        layout_hash = wh.layout_hash
    writer.manifest("export-layout", cfg, {"format": fmt})
    return {"command": "export-layout", "output_dir": str(writer.root), "path": str(path),
            "layout_hash": layout_hash, "config_hash": cfg.hash()}

"""Experiment configuration: YAML files, named presets and dotted overrides.

Values are resolved in three layers, later ones winning: the preset named by
``preset`` (in the file or on the command line), the file itself, and
``key.path=value`` overrides.
"""

from __future__ import annotations

import copy
import hashlib
import json
import math
import os
from pathlib import Path
from typing import Any, Literal, Optional

import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from .engine import EngineConfig
from .warehouse import OrderProfile, WarehouseGraph, WorkerSpec, generate_layout

OUTPUT_ROOT_ENV = "ORDERPICK_OUTPUT_ROOT"


class ConfigError(ValueError):
    """Raised for anything wrong with a configuration; maps to exit code 2."""


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid")


class LayoutConfig(_Strict):
    aisles: int = Field(22, ge=1)
    slots_per_aisle: int = Field(58, ge=1)
    stations: int = Field(4, ge=1)
    scale: float = Field(1 / 3, gt=0)
    slot_pitch: float = Field(3.0, gt=0)
    aisle_spacing: float = Field(6.0, gt=0)
    cross_aisle_gap: float = Field(3.0, gt=0)


class WorkersConfig(_Strict):
    agvs: int = Field(16, ge=1)
    pickers: int = Field(8, ge=1)
    speed: float = Field(1.66, gt=0)


class EngineParams(_Strict):
    tick_seconds: float = Field(5.0, gt=0)
    orders_per_episode: int = Field(80, ge=1)
    max_ticks: int = Field(20_000, ge=1)


class OrdersConfig(_Strict):
    mean_length: float = Field(5.0, ge=1)
    min_length: int = Field(1, ge=1)
    max_length: Optional[int] = None


class TrainingConfig(_Strict):
    algorithm: Literal["hsnac", "snac"] = "hsnac"
    episodes: int = Field(8000, ge=1)
    n_envs: int = Field(4, ge=1)
    rollout_ticks: int = Field(16, ge=1)
    gamma: float = Field(0.99, ge=0, le=1)
    gae_lambda: float = Field(0.95, ge=0, le=1)
    lr: float = Field(3e-4, gt=0)
    entropy_coef: float = Field(0.01, ge=0)
    value_coef: float = Field(0.5, ge=0)
    max_grad_norm: float = Field(0.5, gt=0)
    eval_interval: int = Field(50, ge=1)
    eval_episodes: int = Field(5, ge=1)
    checkpoint_interval: int = Field(500, ge=0)
    worker_hidden: list[int] = [64, 64]
    manager_hidden: list[int] = [128, 128, 128]


class BenchConfig(_Strict):
    samples: int = Field(300, ge=1)
    warmup: int = Field(20, ge=0)
    n_envs: int = Field(4, ge=1)


class ExperimentConfig(_Strict):
    preset: Optional[str] = None
    layout: LayoutConfig = LayoutConfig()
    workers: WorkersConfig = WorkersConfig()
    engine: EngineParams = EngineParams()
    orders: OrdersConfig = OrdersConfig()
    sectors: int = Field(22, ge=1)
    policy: Literal["fm", "pdm", "random", "checkpoint"] = "pdm"
    checkpoint: Optional[str] = None
    episodes: int = Field(50, ge=1)
    seed: int = Field(0, ge=0)
    parallel: int = Field(1, ge=1)
    output_dir: Optional[str] = None
    training: TrainingConfig = TrainingConfig()
    bench: BenchConfig = BenchConfig()

    @model_validator(mode="after")
    def _check(self) -> ExperimentConfig:
        n_items = self.layout.aisles * self.layout.slots_per_aisle
        n_nodes = n_items + 2 * self.layout.aisles + self.layout.stations
        if self.sectors > n_nodes:
            raise ValueError(f"sectors={self.sectors} exceeds the {n_nodes} locations of the layout")
        o = self.orders
        top = o.max_length if o.max_length is not None else max(math.ceil(2 * o.mean_length), o.min_length)
        if not o.min_length <= o.mean_length <= top:
            raise ValueError("orders need min_length <= mean_length <= max_length")
        if self.policy == "checkpoint" and not self.checkpoint:
            raise ValueError("policy 'checkpoint' needs a checkpoint path")
        return self

    # -- builders -------------------------------------------------------
    def build_layout(self) -> WarehouseGraph:
        lay = self.layout
        return generate_layout(lay.aisles, lay.slots_per_aisle, lay.stations, lay.scale,
                               lay.slot_pitch, lay.aisle_spacing, lay.cross_aisle_gap)

    def worker_spec(self) -> WorkerSpec:
        return WorkerSpec(self.workers.agvs, self.workers.pickers, self.workers.speed)

    def order_profile(self, n_items: int) -> OrderProfile:
        o = self.orders
        return OrderProfile.uniform(n_items, o.mean_length, o.min_length, o.max_length)

    def engine_config(self) -> EngineConfig:
        e = self.engine
        return EngineConfig(e.tick_seconds, e.orders_per_episode, e.max_ticks)

    def hash(self) -> str:
        """Digest of everything that affects results (output location excluded)."""
        return _digest(self.model_dump(exclude={"output_dir", "preset"}))

    def checkpoint_hash(self) -> str:
        """Digest a resumed training run must match; the episode budget may grow."""
        payload = self.model_dump(exclude={"output_dir", "preset", "episodes", "policy", "checkpoint",
                                           "parallel", "bench"})
        payload["training"].pop("episodes")
        return _digest(payload)


def _digest(payload: dict) -> str:
    blob = json.dumps(payload, sort_keys=True).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


PRESETS: dict[str, dict[str, Any]] = {
    "paper": {
        "layout": {"aisles": 22, "slots_per_aisle": 58, "stations": 4},
        "workers": {"agvs": 16, "pickers": 8},
        "engine": {"orders_per_episode": 80},
        "orders": {"mean_length": 5.0},
        "sectors": 22,
    },
    "tiny": {
        "layout": {"aisles": 2, "slots_per_aisle": 5, "stations": 1},
        "workers": {"agvs": 2, "pickers": 1},
        "engine": {"orders_per_episode": 10, "max_ticks": 2000},
        "orders": {"mean_length": 5.0, "max_length": 10},
        "sectors": 2,
        "training": {"episodes": 1000, "lr": 1e-3, "gamma": 0.95,
                     "eval_interval": 100, "eval_episodes": 10, "checkpoint_interval": 0},
    },
}


def deep_merge(base: dict, extra: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in extra.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = deep_merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def parse_override(text: str) -> tuple[list[str], Any]:
    """``a.b=value`` with the value parsed as YAML (so numbers stay numbers)."""
    key, sep, raw = text.partition("=")
    if not sep or not key.strip():
        raise ConfigError(f"override {text!r} is not of the form key=value")
    try:
        value = yaml.safe_load(raw) if raw.strip() else None
    except yaml.YAMLError as exc:
        raise ConfigError(f"cannot parse value in {text!r}: {exc}") from exc
    if isinstance(value, str):
        # YAML 1.1 reads "1e-3" as a string
        try:
            value = float(value)
        except ValueError:
            pass
    return key.strip().split("."), value


def apply_overrides(data: dict, overrides) -> dict:
    out = copy.deepcopy(data)
    for item in overrides or ():
        path, value = parse_override(item) if isinstance(item, str) else item
        node = out
        for part in path[:-1]:
            node = node.setdefault(part, {})
            if not isinstance(node, dict):
                raise ConfigError(f"cannot set {'.'.join(path)}: {part} is not a section")
        node[path[-1]] = value
    return out


def read_file(path: str | Path) -> dict:
    try:
        with open(path) as fh:
            data = yaml.safe_load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except yaml.YAMLError as exc:
        raise ConfigError(f"config {path} is not valid YAML: {exc}") from exc
    if data is None:
        return {}
    if not isinstance(data, dict):
        raise ConfigError(f"config {path} must be a mapping at the top level")
    return data


def resolve(data: dict | None = None, preset: str | None = None, overrides=()) -> ExperimentConfig:
    data = apply_overrides(dict(data or {}), overrides)
    name = preset or data.get("preset")
    base: dict = {}
    if name is not None:
        if name not in PRESETS:
            raise ConfigError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}")
        base = PRESETS[name]
    merged = deep_merge(base, data)
    merged["preset"] = name
    try:
        return ExperimentConfig.model_validate(merged)
    except ValidationError as exc:
        raise ConfigError(str(exc)) from exc


def load_config(path: str | Path | None = None, preset: str | None = None, overrides=()) -> ExperimentConfig:
    data = read_file(path) if path is not None else {}
    return resolve(data, preset, overrides)


def dump_yaml(cfg: ExperimentConfig) -> str:
    return yaml.safe_dump(cfg.model_dump(), sort_keys=False)


def output_root() -> Path:
    return Path(os.environ.get(OUTPUT_ROOT_ENV, "runs"))


def output_dir(cfg: ExperimentConfig, command: str) -> Path:
    """Explicit ``output_dir`` (relative ones sit under the output root) or ``<root>/<command>-<hash>``."""
    if cfg.output_dir:
        p = Path(cfg.output_dir)
        return p if p.is_absolute() else output_root() / p
    return output_root() / f"{command}-{cfg.hash()}"

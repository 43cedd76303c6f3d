from __future__ import annotations

from typing import Any, Literal, Optional

from pydantic import BaseModel, Field


class ConfigRequest(BaseModel):
    """A config mapping (same shape as the YAML file), a preset and dotted overrides."""

    preset: Optional[str] = None
    config: dict[str, Any] = Field(default_factory=dict)
    overrides: list[str] = Field(default_factory=list)


class SimulateRequest(ConfigRequest):
    record_events: bool = False


class EvalRequest(ConfigRequest):
    checkpoint: str
    record_events: bool = False


class TrainRequest(ConfigRequest):
    resume: bool = False


class BenchRequest(ConfigRequest):
    pass


class LayoutRequest(ConfigRequest):
    format: Literal["json", "text"] = "json"


class MetricSummary(BaseModel):
    mean: float
    ci95_low: float
    ci95_high: float


class RunResponse(BaseModel):
    command: str
    output_dir: str
    config_hash: str


class SimulateResponse(RunResponse):
    policy: str
    episodes: int
    aggregate: dict[str, MetricSummary]


class CurveRow(BaseModel):
    episode: int
    pick_rate: float
    mean_reward: float
    policy_loss: float
    value_loss: float
    entropy: float


class TrainResponse(RunResponse):
    algorithm: str
    episodes_done: int
    checkpoint: str
    curve: list[CurveRow]
    final_eval: dict[str, MetricSummary]
    train_seconds: float


class BenchResponse(RunResponse):
    n_envs: int
    samples: int
    warmup: int
    locations: int
    agents: int
    mean_step_seconds: float
    std_step_seconds: float
    steps_per_second: float
    steps_per_second_std: float
    env_steps_per_second: float


class LayoutResponse(RunResponse):
    path: str
    layout_hash: str


class Health(BaseModel):
    status: str = "ok"
    version: str


class SessionCreate(ConfigRequest):
    seed: int = 0
    include_observations: bool = True


class StepRequest(BaseModel):
    actions: list[Optional[int]]
    check_masks: bool = True


class SessionState(BaseModel):
    session_id: str
    tick: int
    done: bool
    num_agvs: int
    num_agents: int
    locations: int
    committed: list[bool]
    observations: Optional[list[list[float]]] = None


class StepResponse(SessionState):
    rewards: list[float]
    picks: int
    completed: int


class MaskResponse(BaseModel):
    agent: int
    legal: list[int]


class SessionMetrics(BaseModel):
    session_id: str
    done: bool
    pick_rate_lines_per_hour: float
    agv_distance_m: float
    picker_distance_m: float
    agv_idle_s: float
    picker_idle_s: float
    mean_lead_time_s: Optional[float]
    lines_picked: int
    orders_completed: int
    ticks: int

"""Episode runner and mean / 95% confidence-interval aggregation."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import stats

from .engine import MetricsReport, OrderPickingEnv, episode_metrics

METRIC_COLUMNS = (
    "pick_rate_lines_per_hour",
    "agv_distance_m",
    "picker_distance_m",
    "agv_idle_s",
    "picker_idle_s",
    "mean_lead_time_s",
)


def run_episode(env: OrderPickingEnv, policy, seed: int) -> MetricsReport:
    env.reset(seed)
    policy.reset(env, seed)
    done = False
    while not done:
        actions = policy.act(env)
        _, _, done, _ = env.step(actions, check_masks=policy.check_masks, observe=False)
    return episode_metrics(env.state)


@dataclass(frozen=True)
class Interval:
    mean: float
    low: float
    high: float
    n: int

    @property
    def half_width(self) -> float:
        return (self.high - self.low) / 2

    def overlaps(self, other: Interval) -> bool:
        return self.low <= other.high and other.low <= self.high


def confidence_interval(samples, level: float = 0.95) -> Interval:
    x = np.asarray(samples, dtype=np.float64)
    x = x[np.isfinite(x)]
    n = len(x)
    if n == 0:
        return Interval(float("nan"), float("nan"), float("nan"), 0)
    mean = float(x.mean())
    if n == 1:
        return Interval(mean, mean, mean, 1)
    half = float(stats.t.ppf(0.5 + level / 2, n - 1) * x.std(ddof=1) / np.sqrt(n))
    return Interval(mean, mean - half, mean + half, n)


def aggregate(reports: list[MetricsReport]) -> dict[str, Interval]:
    rows = [r.row() for r in reports]
    return {col: confidence_interval([row[col] for row in rows]) for col in METRIC_COLUMNS}


def evaluate(env: OrderPickingEnv, policy, episodes: int, seed: int = 0):
    """Run ``episodes`` episodes with seeds ``seed, seed + 1, ...``."""
    reports = [run_episode(env, policy, seed + e) for e in range(episodes)]
    return reports, aggregate(reports)

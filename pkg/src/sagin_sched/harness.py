"""Experiment harness: config loading, scenario presets, metric recompute,
CSV/JSON emission, and seed management."""

from __future__ import annotations

import dataclasses
import json
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from . import baselines, marl
from .clustering import ClusterConfig
from .env import SCENARIOS, EnvConfig, ScenarioPreset, TaskRecord
from .marl import MetricsRow, RunResult, TrainConfig

CSV_HEADER = ("episode,slot,reward,cumulative_profit,completion_rate,"
              "jain_index,cluster_count,critic_loss,actor_objective")


@dataclass
class RunConfig:
    area_side: float = 5000.0
    n_bs: int = 25
    n_uavs: int = 40
    bs_capacity_range: tuple[float, float] = (20e9, 40e9)
    arrival_rate: float = 25.0
    scenario: str = "balanced"
    algorithm: str = "cmaddpg"
    episodes: int = 100
    slot_seconds: float = 0.1
    episode_length: int = 200
    seeds: tuple[int, ...] = (0,)
    deterministic_channel: bool = False
    convergence_window: int = 50
    final_window: int = 100
    cluster: ClusterConfig = field(default_factory=ClusterConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    env_overrides: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.scenario not in SCENARIOS:
            raise ValueError(f"scenario: must be one of {sorted(SCENARIOS)}, "
                             f"got {self.scenario!r}")
        if self.algorithm not in baselines.ALGORITHMS:
            raise ValueError(f"algorithm: must be one of {baselines.ALGORITHMS}")
        for key in ("area_side", "arrival_rate", "slot_seconds"):
            if getattr(self, key) < 0 or (key != "arrival_rate"
                                          and getattr(self, key) <= 0):
                raise ValueError(f"{key}: must be positive, got {getattr(self, key)}")
        if self.arrival_rate < 0:
            raise ValueError(f"arrival_rate: must be >= 0, got {self.arrival_rate}")
        for key in ("n_bs", "n_uavs", "episodes", "episode_length"):
            if getattr(self, key) < 1 and not (key == "episodes"
                                               and self.episodes == 0):
                raise ValueError(f"{key}: must be >= 1, got {getattr(self, key)}")

    def env_config(self) -> EnvConfig:
        cfg = EnvConfig(area_side=self.area_side, n_bs=self.n_bs,
                        n_uavs=self.n_uavs,
                        bs_capacity_range=tuple(self.bs_capacity_range),
                        arrival_rate=self.arrival_rate,
                        slot_seconds=self.slot_seconds,
                        episode_length=self.episode_length,
                        coverage_radius=self.cluster.comm_radius,
                        scenario=SCENARIOS[self.scenario])
        for key, value in self.env_overrides.items():
            if not hasattr(cfg, key):
                raise ValueError(f"env_overrides.{key}: unknown field")
            setattr(cfg, key, value)
        if self.deterministic_channel:
            cfg.bs_channel = dataclasses.replace(cfg.bs_channel,
                                                 shadowing_sigma_db=0.0)
            cfg.sat_channel = dataclasses.replace(cfg.sat_channel,
                                                  shadowing_sigma_db=0.0)
        return cfg


def desk_overrides() -> dict:
    """Desk-scale preset: quarter-side area, 12 UAVs, 6 BSs; keeps runtimes
    short enough for multi-seed sweeps."""
    return {
        "area_side": 1250.0,
        "n_uavs": 12,
        "n_bs": 6,
        "cluster": {"comm_radius": 500.0, "recluster_period": 50},
    }


_SIMPLE_KEYS = {f.name for f in dataclasses.fields(RunConfig)
                if f.name not in ("cluster", "train", "env_overrides")}


def load_config(path: str | Path | None, overrides: dict | None = None
                ) -> RunConfig:
    """Load a YAML config; empty file (or no path) means all defaults.

    Unknown keys are rejected with the offending key path in the message.
    `overrides` follows the same schema and wins over the file.
    """
    data: dict = {}
    if path is not None:
        p = Path(path)
        if not p.exists():
            raise FileNotFoundError(f"config file not found: {p}")
        loaded = yaml.safe_load(p.read_text())
        if loaded is None:
            loaded = {}
        if not isinstance(loaded, dict):
            raise ValueError(f"config root must be a mapping, got {type(loaded)}")
        data = loaded
    for ov in (overrides or {},):
        for key, value in ov.items():
            if isinstance(value, dict) and isinstance(data.get(key), dict):
                data[key].update(value)
            else:
                data[key] = value

    kwargs = {}
    for key, value in data.items():
        if key == "cluster":
            _check_keys(value, ClusterConfig, "cluster")
            kwargs["cluster"] = ClusterConfig(**value)
        elif key == "train":
            _check_keys(value, TrainConfig, "train")
            tv = dict(value)
            for tup in ("actor_hidden", "critic_hidden"):
                if tup in tv:
                    tv[tup] = tuple(tv[tup])
            kwargs["train"] = TrainConfig(**tv)
        elif key == "env_overrides":
            kwargs["env_overrides"] = dict(value)
        elif key in _SIMPLE_KEYS:
            if key == "seeds":
                value = tuple(int(s) for s in value)
            if key == "bs_capacity_range":
                value = tuple(float(v) for v in value)
            kwargs[key] = value
        else:
            raise ValueError(f"unknown config key: {key}")
    return RunConfig(**kwargs)


def _check_keys(mapping: dict, cls, prefix: str) -> None:
    valid = {f.name for f in dataclasses.fields(cls)}
    for key in mapping:
        if key not in valid:
            raise ValueError(f"unknown config key: {prefix}.{key}")


def execute(cfg: RunConfig, seed: int) -> RunResult:
    env_cfg = cfg.env_config()
    algo = cfg.algorithm
    if algo == "cmaddpg":
        return marl.cmaddpg_run(env_cfg, cfg.cluster, cfg.train, seed,
                                cfg.episodes)
    if algo == baselines.NAIVE_MADDPG:
        return baselines.naive_maddpg_run(env_cfg, cfg.cluster, cfg.train,
                                          seed, cfg.episodes)
    if algo == baselines.MAAC:
        return baselines.maac_run(env_cfg, cfg.cluster, cfg.train, seed,
                                  cfg.episodes)
    return baselines.heuristic_run(algo, env_cfg, seed, cfg.episodes)


def _fmt(value: float) -> str:
    return repr(float(value))


def rows_to_csv(rows: list[MetricsRow]) -> str:
    lines = [CSV_HEADER]
    for r in rows:
        lines.append(",".join([
            str(r.episode), str(r.slot), _fmt(r.reward),
            _fmt(r.cumulative_profit), _fmt(r.completion_rate),
            _fmt(r.jain_index), str(r.cluster_count),
            _fmt(r.critic_loss), _fmt(r.actor_objective)]))
    return "\n".join(lines) + "\n"


def moving_average(values, window: int) -> np.ndarray:
    values = np.asarray(values, dtype=float)
    if window <= 1 or values.size == 0:
        return values
    out = np.empty_like(values)
    csum = np.concatenate([[0.0], np.cumsum(values)])
    for i in range(values.size):
        lo = max(0, i - window + 1)
        out[i] = (csum[i + 1] - csum[lo]) / (i + 1 - lo)
    return out


def convergence_episode(episode_profits, window: int = 50) -> int:
    """First episode where the moving average reaches 95% of its final
    value; -1 when the run never does (e.g. empty)."""
    ma = moving_average(episode_profits, window)
    if ma.size == 0:
        return -1
    final = ma[-1]
    target = 0.95 * final
    for i, v in enumerate(ma):
        if (v >= target if final >= 0 else v <= target):
            return i
    return -1


def summarize(result: RunResult, cfg: RunConfig, seed: int,
              wall_time: float) -> dict:
    profits = result.episode_profits
    window = min(cfg.final_window, len(profits)) or 1
    final_profits = profits[-window:] if profits else [0.0]
    return {
        "seed": seed,
        "algorithm": cfg.algorithm,
        "scenario": cfg.scenario,
        "episodes": cfg.episodes,
        "mean_final_window_profit": float(np.mean(final_profits)),
        "total_profit": float(np.sum(profits)) if profits else 0.0,
        "completion_rate": (result.on_time / result.spawned
                            if result.spawned else 0.0),
        "convergence_episode": convergence_episode(profits,
                                                   cfg.convergence_window),
        "tight_deadline_profit": result.tight_profit,
        "on_time_profit": result.total_on_time_profit,
        "mean_episode_seconds": (float(np.mean(result.episode_seconds))
                                 if result.episode_seconds else 0.0),
        "wall_time_seconds": wall_time,
    }


def run_experiment(cfg: RunConfig, out_dir: str | Path) -> list[dict]:
    """Run the configured algorithm for every seed; writes per-seed
    metrics.csv, run.json, checkpoints/ and clusters.log (single-seed runs
    write at the top level)."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    summaries = []
    for seed in cfg.seeds:
        run_dir = out if len(cfg.seeds) == 1 else out / f"seed_{seed}"
        run_dir.mkdir(parents=True, exist_ok=True)
        t0 = time.perf_counter()
        result = execute(cfg, seed)
        wall = time.perf_counter() - t0
        (run_dir / "metrics.csv").write_text(rows_to_csv(result.rows))
        summary = summarize(result, cfg, seed, wall)
        run_json = {"config": config_echo(cfg), "totals": summary}
        (run_dir / "run.json").write_text(json.dumps(run_json, indent=2,
                                                     sort_keys=True))
        if result.agents:
            marl.save_run_checkpoints(result, run_dir / "checkpoints")
        if result.cluster_log:
            (run_dir / "clusters.log").write_text(
                "\n".join(result.cluster_log) + "\n")
        summaries.append(summary)
    return summaries


def config_echo(cfg: RunConfig) -> dict:
    def encode(obj):
        if dataclasses.is_dataclass(obj) and not isinstance(obj, type):
            return {k: encode(v) for k, v in dataclasses.asdict(obj).items()}
        if isinstance(obj, tuple):
            return list(obj)
        return obj
    return {f.name: encode(getattr(cfg, f.name))
            for f in dataclasses.fields(cfg)}


def compute_metrics(records: dict[int, TaskRecord],
                    device_busy_cycles: dict) -> dict:
    """Independent recompute of the headline metrics from a task trace."""
    spawned = len(records)
    on_time = sum(1 for r in records.values() if r.on_time)
    profit = sum(r.profit for r in records.values() if r.on_time)
    util = np.array([c for c in device_busy_cycles.values()])
    return {
        "completion_rate": on_time / spawned if spawned else 0.0,
        "on_time_profit": profit,
        "jain_index": marl.jain_index(util),
    }

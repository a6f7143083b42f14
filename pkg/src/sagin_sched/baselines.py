"""Comparison schedulers sharing the environment contract: naive per-UAV
MADDPG, independent-critic MAAC, and three heuristic floors."""

from __future__ import annotations

import time

import numpy as np

from .clustering import ClusterConfig
from .env import Action, EnvConfig, SaginEnv, Task
from .marl import (MetricsRow, RunResult, TrainConfig, jain_index,
                   run_training)

NAIVE_MADDPG = "maddpg"
MAAC = "maac"
GREEDY_NEAREST = "greedy"
RANDOM_OFFLOAD = "random"
LOCAL_ONLY = "local"

HEURISTICS = (GREEDY_NEAREST, RANDOM_OFFLOAD, LOCAL_ONLY)
ALGORITHMS = ("cmaddpg", NAIVE_MADDPG, MAAC) + HEURISTICS


def naive_maddpg_run(env_cfg: EnvConfig, ccfg: ClusterConfig,
                     tcfg: TrainConfig, seed: int, episodes: int) -> RunResult:
    """MADDPG without clustering: one agent per UAV, shared global critic."""
    return run_training(env_cfg, ccfg, tcfg, seed, episodes, mode="maddpg")


def maac_run(env_cfg: EnvConfig, ccfg: ClusterConfig, tcfg: TrainConfig,
             seed: int, episodes: int) -> RunResult:
    """Per-UAV agents with fully independent critics (no joint inputs)."""
    return run_training(env_cfg, ccfg, tcfg, seed, episodes, mode="maac")


def heuristic_action(kind: str, env: SaginEnv, task: Task,
                     backlog_snapshot: dict, rng: np.random.Generator) -> Action:
    """Non-learned comparison rules.

    GreedyNearest: feasible device minimizing estimated total delay
    (transmission + computing + snapshot backlog), eta = 1 - delta/delta_max.
    RandomOffload: uniform device, eta ~ U[0,1]. LocalOnly: always local,
    eta = 0.5.
    """
    cfg = env.cfg
    if kind == GREEDY_NEAREST:
        return env.greedy_action(task, backlog_snapshot)
    if kind == RANDOM_OFFLOAD:
        idx = int(rng.integers(cfg.n_devices))
        eta = float(rng.uniform(0.0, 1.0))
    elif kind == LOCAL_ONLY:
        idx = 0
        eta = 0.5
    else:
        raise ValueError(f"unknown heuristic {kind!r}")
    enc = np.zeros(cfg.act_dim)
    enc[idx] = 1.0
    enc[-1] = eta
    return Action(cfg.device_id(idx, task.origin_uav), eta, enc)


def heuristic_run(kind: str, env_cfg: EnvConfig, seed: int,
                  episodes: int) -> RunResult:
    """Episode loop for the heuristic schedulers (no training)."""
    if kind not in HEURISTICS:
        raise ValueError(f"unknown heuristic {kind!r}")
    env = SaginEnv(env_cfg)
    rng = np.random.default_rng(np.random.SeedSequence([seed, 2]))
    result = RunResult(rows=[], episode_profits=[], episode_seconds=[])
    cumulative_profit = 0.0
    spawned_total = 0
    ontime_total = 0
    busy_cycles: dict = {}

    for episode in range(episodes):
        t_ep = time.perf_counter()
        env.reset(seed, episode)
        episode_profit = 0.0
        for slot in range(env_cfg.episode_length):
            snapshot = env.backlog_snapshot()
            actions = {t.id: (-1, heuristic_action(kind, env, t, snapshot, rng))
                       for t in env.pending_tasks}
            outcome = env.step(actions)
            episode_profit += outcome.reward
            cumulative_profit += outcome.reward
            spawned_now = spawned_total + env.spawned_count
            ontime_now = ontime_total + len(env.completed_ids)
            util = np.array([busy_cycles.get(d, 0.0) + env.device_busy_cycles[d]
                             for d in env.device_busy_cycles])
            result.rows.append(MetricsRow(
                episode=episode, slot=slot, reward=outcome.reward,
                cumulative_profit=cumulative_profit,
                completion_rate=(ontime_now / spawned_now if spawned_now else 0.0),
                jain_index=jain_index(util),
                cluster_count=0))
        spawned_total += env.spawned_count
        ontime_total += len(env.completed_ids)
        for did, cyc in env.device_busy_cycles.items():
            busy_cycles[did] = busy_cycles.get(did, 0.0) + cyc
        for rec in env.records.values():
            if rec.on_time:
                result.total_on_time_profit += rec.profit
                if rec.task.deadline <= 0.02:
                    result.tight_profit += rec.profit
        result.episode_profits.append(episode_profit)
        result.episode_seconds.append(time.perf_counter() - t_ep)

    result.spawned = spawned_total
    result.on_time = ontime_total
    return result

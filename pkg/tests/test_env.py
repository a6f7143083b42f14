import math

import numpy as np
import pytest

from sagin_sched import env as envmod
from sagin_sched.clustering import Cluster, ClusterState
from sagin_sched.core import (BASE_STATION, ComputeDevice, DeviceId, LOCAL,
                              Position, SATELLITE, Task)
from sagin_sched.env import (Action, DeviceQueueSim, EnvConfig, SCENARIOS,
                             SaginEnv, audit_constraints, spawn_tasks)


def small_cfg(**kw):
    defaults = dict(area_side=1000.0, n_bs=3, n_uavs=4, arrival_rate=5.0,
                    episode_length=20, coverage_radius=2000.0)
    defaults.update(kw)
    return EnvConfig(**defaults)


def mk_task(tid, workload_cycles, arrival_slot=0, origin=0, deadline=1.0):
    # encode workload via bits=1 so cycles_per_bit == workload
    return Task(id=tid, origin_uav=origin, data_bits=1.0,
                cycles_per_bit=workload_cycles, deadline=deadline,
                arrival_slot=arrival_slot)


def brute_force_schedule(jobs, capacity, t_end):
    """Reference non-preemptive max-priority schedule for one device.

    jobs: list of (arrival_time, eta, arrival_slot, task_id, workload).
    Returns {task_id: (start, finish)} for services starting before t_end.
    """
    remaining = list(jobs)
    free = 0.0
    out = {}
    while remaining:
        ready = [j for j in remaining if j[0] <= free]
        if not ready:
            free = min(j[0] for j in remaining)
            ready = [j for j in remaining if j[0] <= free]
        if free >= t_end:
            break
        # highest eta wins; ties broken by arrival slot then task id
        chosen = sorted(ready, key=lambda j: (-j[1], j[2], j[3]))[0]
        remaining.remove(chosen)
        finish = free + chosen[4] / capacity
        out[chosen[3]] = (free, finish)
        free = finish
    return out


def device_1ghz():
    return ComputeDevice(DeviceId(BASE_STATION, 1), Position(0, 0, 0), 1e9)


class TestDeviceQueueSim:
    def test_priority_order_frozen_example(self):
        # A (0.2 Gcycles, eta 0.9) then B (0.3 Gcycles, eta 0.5), both at t=0
        q = DeviceQueueSim(device_1ghz())
        q.push(0.0, 0.9, mk_task(0, 0.2e9))
        q.push(0.0, 0.5, mk_task(1, 0.3e9))
        done = {t.id: (s, f) for t, s, f in q.run_until(10.0)}
        assert done[0] == (0.0, pytest.approx(0.2))
        assert done[1] == (pytest.approx(0.2), pytest.approx(0.5))

    def test_priority_swap(self):
        q = DeviceQueueSim(device_1ghz())
        q.push(0.0, 0.5, mk_task(0, 0.2e9))
        q.push(0.0, 0.9, mk_task(1, 0.3e9))
        done = {t.id: (s, f) for t, s, f in q.run_until(10.0)}
        assert done[1] == (0.0, pytest.approx(0.3))
        assert done[0] == (pytest.approx(0.3), pytest.approx(0.5))

    def test_non_preemption(self):
        # a later high-priority arrival must wait for the running task
        q = DeviceQueueSim(device_1ghz())
        q.push(0.0, 0.1, mk_task(0, 1.0e9))
        q.push(0.1, 0.9, mk_task(1, 0.5e9))
        done = {t.id: (s, f) for t, s, f in q.run_until(10.0)}
        assert done[0] == (0.0, pytest.approx(1.0))
        assert done[1] == (pytest.approx(1.0), pytest.approx(1.5))

    def test_idle_gap(self):
        q = DeviceQueueSim(device_1ghz())
        q.push(0.0, 0.5, mk_task(0, 0.1e9))
        q.push(0.5, 0.5, mk_task(1, 0.1e9))
        done = {t.id: (s, f) for t, s, f in q.run_until(10.0)}
        assert done[0] == (0.0, pytest.approx(0.1))
        assert done[1] == (pytest.approx(0.5), pytest.approx(0.6))

    def test_horizon_cuts_off_unstarted_service(self):
        q = DeviceQueueSim(device_1ghz())
        q.push(0.0, 0.5, mk_task(0, 0.3e9))
        q.push(0.0, 0.4, mk_task(1, 0.3e9))
        first = q.run_until(0.2)
        assert [t.id for t, _, _ in first] == [0]
        second = q.run_until(0.4)
        assert [t.id for t, _, _ in second] == [1]
        assert second[0][1] == pytest.approx(0.3)

    def test_incremental_equals_single_run(self):
        rng = np.random.default_rng(0)
        for _ in range(20):
            jobs = [(rng.uniform(0, 2), rng.uniform(0, 1), 0, i,
                     rng.uniform(0.05e9, 0.5e9)) for i in range(8)]
            q1 = DeviceQueueSim(device_1ghz())
            q2 = DeviceQueueSim(device_1ghz())
            for a, e, s, i, w in jobs:
                q1.push(a, e, mk_task(i, w))
                q2.push(a, e, mk_task(i, w))
            whole = {t.id: (s, f) for t, s, f in q1.run_until(100.0)}
            sliced = {}
            for t_end in np.arange(0.1, 100.1, 0.1):
                for t, s, f in q2.run_until(float(t_end)):
                    sliced[t.id] = (s, f)
            assert whole.keys() == sliced.keys()
            for tid in whole:
                assert whole[tid] == pytest.approx(sliced[tid], abs=1e-12)

    def test_matches_brute_force_on_random_scenarios(self):
        rng = np.random.default_rng(11)
        for case in range(50):
            n = int(rng.integers(1, 11))
            cap = rng.uniform(0.5e9, 5e9)
            horizon = rng.uniform(0.2, 3.0)
            jobs = []
            for i in range(n):
                arrival = float(rng.uniform(0, 1.5))
                eta = float(rng.choice([0.1, 0.3, 0.5, 0.7, 0.9]))
                slot = int(arrival * 10)
                w = float(rng.uniform(0.02e9, 0.6e9))
                jobs.append((arrival, eta, slot, i, w))
            ref = brute_force_schedule(jobs, cap, horizon)
            q = DeviceQueueSim(ComputeDevice(DeviceId(BASE_STATION, 1),
                                             Position(0, 0, 0), cap))
            for a, e, s, i, w in jobs:
                t = Task(id=i, origin_uav=0, data_bits=1.0, cycles_per_bit=w,
                         deadline=1.0, arrival_slot=s)
                q.push(a, e, t)
            got = {t.id: (s, f) for t, s, f in q.run_until(horizon)}
            assert got.keys() == ref.keys(), f"case {case}"
            for tid in ref:
                assert got[tid][0] == pytest.approx(ref[tid][0], abs=1e-9)
                assert got[tid][1] == pytest.approx(ref[tid][1], abs=1e-9)

    def test_backlog_delay(self):
        q = DeviceQueueSim(device_1ghz())
        assert q.backlog_delay(0.0) == 0.0
        q.push(0.0, 0.5, mk_task(0, 0.4e9))
        assert q.backlog_delay(0.0) == pytest.approx(0.4)
        q.run_until(0.1)   # starts service; next_free = 0.4
        assert q.backlog_delay(0.1) == pytest.approx(0.3)
        assert q.backlog_delay(1.0) == 0.0


class TestSpawning:
    def test_poisson_mean(self):
        cfg = small_cfg(arrival_rate=25.0, slot_seconds=0.1)
        rng = np.random.default_rng(0)
        counts = [len(spawn_tasks(s, rng, cfg.scenario, cfg, 0))
                  for s in range(4000)]
        assert np.mean(counts) == pytest.approx(2.5, abs=0.08)

    def test_feature_ranges(self):
        cfg = small_cfg()
        rng = np.random.default_rng(1)
        tasks = []
        for s in range(500):
            tasks.extend(spawn_tasks(s, rng, cfg.scenario, cfg, len(tasks)))
        for t in tasks:
            assert cfg.task_bits_range[0] <= t.data_bits <= cfg.task_bits_range[1]
            w = t.workload_cycles
            assert cfg.task_cycles_range[0] - 1 <= w <= cfg.task_cycles_range[1] + 1
            assert cfg.deadline_range[0] <= t.deadline <= cfg.deadline_range[1]
            assert 0 <= t.origin_uav < cfg.n_uavs

    def test_ids_are_consecutive(self):
        cfg = small_cfg(arrival_rate=50.0)
        rng = np.random.default_rng(2)
        tasks = spawn_tasks(0, rng, cfg.scenario, cfg, 17)
        assert [t.id for t in tasks] == list(range(17, 17 + len(tasks)))

    def test_delay_sensitive_scenario_tightens_deadlines(self):
        cfg = small_cfg(arrival_rate=50.0)
        scen = SCENARIOS["delay_sensitive"]
        rng = np.random.default_rng(3)
        tasks = []
        for s in range(2000):
            tasks.extend(spawn_tasks(s, rng, scen, cfg, len(tasks)))
        tight = sum(1 for t in tasks if t.deadline <= cfg.tight_deadline_range[1])
        frac = tight / len(tasks)
        # 30% forced tight plus ~7% of the wide band falling under 20 ms
        assert frac == pytest.approx(0.3 + 0.7 * 0.1, abs=0.03)

    def test_compute_intensive_scenario_scales_workload(self):
        cfg = small_cfg(arrival_rate=50.0)
        scen = SCENARIOS["compute_intensive"]
        rng = np.random.default_rng(4)
        tasks = []
        for s in range(500):
            tasks.extend(spawn_tasks(s, rng, scen, cfg, len(tasks)))
        mean_w = np.mean([t.workload_cycles for t in tasks])
        assert mean_w == pytest.approx(1.5 * 2000e6, rel=0.03)


def run_episode(env, policy):
    """Drive a full episode; policy(env, task) -> Action. Returns rewards."""
    env.reset(seed=123)
    rewards = []
    while not env.done:
        actions = {t.id: (t.origin_uav, policy(env, t))
                   for t in env.pending_tasks}
        out = env.step(actions)
        rewards.append(out.reward)
    return rewards


def local_policy(env, task):
    return Action(DeviceId(LOCAL, task.origin_uav), 0.5)


def greedy_policy_factory():
    snap = {}

    def policy(env, task):
        if snap.get("slot") != env.slot:
            snap["slot"] = env.slot
            snap["backlog"] = env.backlog_snapshot()
        return env.greedy_action(task, snap["backlog"])
    return policy


class TestSaginEnv:
    def test_topology_stable_across_episodes(self):
        env = SaginEnv(small_cfg())
        env.reset(seed=7, episode=0)
        bs0 = {d: (dev.position, dev.capacity_hz)
               for d, dev in env.devices.items() if d.kind == BASE_STATION}
        env.reset(seed=7, episode=3)
        bs3 = {d: (dev.position, dev.capacity_hz)
               for d, dev in env.devices.items() if d.kind == BASE_STATION}
        assert bs0 == bs3

    def test_dynamics_differ_across_episodes(self):
        env = SaginEnv(small_cfg(arrival_rate=30.0))
        env.reset(seed=7, episode=0)
        ids0 = [(t.data_bits, t.origin_uav) for t in env.pending_tasks]
        env.reset(seed=7, episode=1)
        ids1 = [(t.data_bits, t.origin_uav) for t in env.pending_tasks]
        assert ids0 != ids1

    def test_apply_actions_requires_exact_cover(self):
        env = SaginEnv(small_cfg(arrival_rate=50.0))
        env.reset(seed=9)
        assert env.pending_tasks
        with pytest.raises(ValueError):
            env.step({})
        env.reset(seed=9)
        acts = {t.id: (0, local_policy(env, t)) for t in env.pending_tasks}
        acts[10 ** 6] = (0, Action(DeviceId(LOCAL, 0), 0.5))
        with pytest.raises(ValueError):
            env.step(acts)

    def test_local_execution_delay_components(self):
        cfg = small_cfg(arrival_rate=0.0, local_capacity=2e9)
        env = SaginEnv(cfg)
        env.reset(seed=1)
        task = mk_task(999, 0.1e9, arrival_slot=env.slot, origin=0, deadline=0.2)
        env.pending_tasks = [task]
        env.records[task.id] = envmod.TaskRecord(task=task)
        env.spawned_count += 1
        out = env.step({task.id: (0, Action(DeviceId(LOCAL, 0), 0.5))})
        rec = env.records[task.id]
        assert rec.transmission == 0.0
        assert rec.queueing == pytest.approx(0.0, abs=1e-12)
        assert rec.computing == pytest.approx(0.05)
        assert rec.on_time
        assert out.reward == pytest.approx(rec.profit)

    def test_uplink_serialization(self):
        cfg = small_cfg(arrival_rate=0.0)
        env = SaginEnv(cfg)
        env.reset(seed=2)
        bs = DeviceId(BASE_STATION, 1)
        idx = cfg.device_index(bs)
        rate = env.rates[0, idx]
        assert rate > 0
        t1 = mk_task(1000, 0.1e9, env.slot, 0, 5.0)
        t2 = mk_task(1001, 0.1e9, env.slot, 0, 5.0)
        for t in (t1, t2):
            object.__setattr__(t, "data_bits", 8e6)
            env.records[t.id] = envmod.TaskRecord(task=t)
        env.pending_tasks = [t1, t2]
        env.spawned_count += 2
        env.step({t1.id: (0, Action(bs, 0.9)), t2.id: (0, Action(bs, 0.8))})
        upload = 8e6 / rate
        r1, r2 = env.records[t1.id], env.records[t2.id]
        assert r1.transmission == pytest.approx(upload, rel=1e-9)
        # second task waits behind the first on the shared uplink
        assert r2.transmission == pytest.approx(upload, rel=1e-9)
        assert r2.queueing >= upload - 1e-9

    def test_reward_is_profit_of_on_time_tasks(self):
        env = SaginEnv(small_cfg(arrival_rate=20.0))
        policy = greedy_policy_factory()
        env.reset(seed=123)
        total_reward = 0.0
        while not env.done:
            actions = {t.id: (t.origin_uav, policy(env, t))
                       for t in env.pending_tasks}
            total_reward += env.step(actions).reward
        by_records = sum(r.profit for r in env.records.values() if r.on_time)
        assert total_reward == pytest.approx(by_records, rel=1e-9)
        report = audit_constraints(env.records, env.cfg)
        assert report.on_time_profit == pytest.approx(total_reward, rel=1e-9)
        assert report.c1_violations == 0 or env.done  # undecided tasks at horizon
        assert report.c3_violations == 0

    def test_conservation(self):
        env = SaginEnv(small_cfg(arrival_rate=20.0))
        run_episode(env, local_policy)
        done, violated, unfinished = env.conservation_counts()
        assert done + violated + unfinished == env.spawned_count
        assert unfinished >= 0
        finished_ids = env.completed_ids | env.violated_ids
        assert len(finished_ids) == done + violated

    def test_trace_determinism(self):
        cfg = small_cfg(arrival_rate=15.0)
        traces = []
        for _ in range(2):
            env = SaginEnv(cfg)
            policy = greedy_policy_factory()
            env.reset(seed=77)
            while not env.done:
                acts = {t.id: (t.origin_uav, policy(env, t))
                        for t in env.pending_tasks}
                env.step(acts)
            traces.append("\n".join(env.trace_lines()))
        assert traces[0] == traces[1]

    def test_different_seed_changes_trace(self):
        cfg = small_cfg(arrival_rate=15.0)
        lines = []
        for seed in (1, 2):
            env = SaginEnv(cfg)
            env.reset(seed=seed)
            run = []
            while not env.done:
                acts = {t.id: (t.origin_uav, local_policy(env, t))
                        for t in env.pending_tasks}
                env.step(acts)
            lines.append("\n".join(env.trace_lines()))
        assert lines[0] != lines[1]


class TestObservation:
    def make_env(self):
        env = SaginEnv(small_cfg(coverage_radius=10000.0))
        env.reset(seed=5)
        return env

    def test_vector_dimension(self):
        env = self.make_env()
        obs = env.zero_observation()
        assert obs.vector().shape == (env.cfg.obs_dim,)

    def test_bs_capacity_split_by_covering_clusters(self):
        env = self.make_env()
        cfg = env.cfg
        pos = {i: env.mobility[i].position for i in range(cfg.n_uavs)}
        single = ClusterState(clusters=[
            Cluster(head=0, members=set(range(cfg.n_uavs)), centroid=pos[0])])
        task = mk_task(0, 1e9, 0, 0, 0.1)
        obs1 = env.build_observation(0, single, 0, task)
        two = ClusterState(clusters=[
            Cluster(head=0, members={0, 1}, centroid=pos[0]),
            Cluster(head=2, members={2, 3}, centroid=pos[2])])
        obs2 = env.build_observation(0, two, 0, task)
        # every BS covered by both clusters -> per-cluster share halves
        for j in range(1, cfg.n_bs + 1):
            assert obs2.resources[j] == pytest.approx(obs1.resources[j] / 2)
        # satellite splits by cluster count
        assert obs2.resources[-1] == pytest.approx(obs1.resources[-1] / 2)

    def test_out_of_range_bs_has_zero_resource(self):
        env = SaginEnv(small_cfg(coverage_radius=1.0))
        env.reset(seed=5)
        cfg = env.cfg
        state = ClusterState(clusters=[
            Cluster(head=0, members={0}, centroid=env.mobility[0].position)])
        obs = env.build_observation(0, state, 0, mk_task(0, 1e9, 0, 0, 0.1))
        assert np.all(obs.resources[1:cfg.n_bs + 1] == 0)

    def test_rejects_foreign_member(self):
        env = self.make_env()
        state = ClusterState(clusters=[
            Cluster(head=0, members={0, 1}, centroid=env.mobility[0].position)])
        with pytest.raises(ValueError):
            env.build_observation(0, state, 3, mk_task(0, 1e9, 0, 3, 0.1))


class TestGreedy:
    def test_picks_minimum_estimated_delay(self):
        env = SaginEnv(small_cfg())
        env.reset(seed=3)
        task = mk_task(0, 2e9, 0, 0, 0.1)
        snap = env.backlog_snapshot()
        delays = [env.estimate_total_delay(task, i, snap)
                  for i in range(env.cfg.n_devices)]
        act = env.greedy_action(task, snap)
        assert env.cfg.device_index(act.device_choice) == int(np.argmin(delays))

    def test_eta_reflects_urgency(self):
        env = SaginEnv(small_cfg())
        env.reset(seed=3)
        snap = env.backlog_snapshot()
        tight = env.greedy_action(mk_task(0, 1e9, 0, 0, 0.0), snap)
        loose = env.greedy_action(mk_task(1, 1e9, 0, 0, 0.2), snap)
        assert tight.priority == pytest.approx(1.0)
        assert loose.priority == pytest.approx(0.0)

    def test_backlog_steers_away_from_busy_device(self):
        env = SaginEnv(small_cfg())
        env.reset(seed=3)
        task = mk_task(0, 2e9, 0, 0, 0.2)
        clean = env.greedy_action(task, env.backlog_snapshot())
        snap = env.backlog_snapshot()
        snap[clean.device_choice] = 1e9  # pretend that device is swamped
        rerouted = env.greedy_action(task, snap)
        assert rerouted.device_choice != clean.device_choice


class TestAudit:
    def test_overload_flags_c4(self):
        cfg = small_cfg()
        # ten 3 Gcycle tasks on one 2 GHz local CPU in one 0.1 s slot
        records = {}
        for i in range(10):
            t = mk_task(i, 3e9, 0, 0, 0.1)
            records[i] = envmod.TaskRecord(task=t, device=DeviceId(LOCAL, 0))
        report = audit_constraints(records, cfg)
        assert report.c4_violations >= 1

    def test_clean_light_load(self):
        cfg = small_cfg()
        t = mk_task(0, 0.1e9, 0, 0, 0.1)
        rec = envmod.TaskRecord(task=t, device=DeviceId(LOCAL, 0),
                                finish=0.05, on_time=True, profit=12.0)
        report = audit_constraints({0: rec}, cfg)
        assert report.c4_violations == 0
        assert report.c2_misses == 0
        assert report.on_time_profit == pytest.approx(12.0)

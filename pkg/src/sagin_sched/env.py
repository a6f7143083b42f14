"""Discrete-time SAGIN offloading environment: task arrivals, per-device
non-preemptive priority queues, the observation/action contract for cluster
head agents, the shared reward, and the constraint auditor.

Time is sliced into slots of `slot_seconds`. Tasks spawned for slot t are
surfaced for decisions at the start of slot t; uploads are serialized per
source UAV; devices run their queues continuously across slot boundaries.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import core
from .core import (AreaBounds, BASE_STATION, ChannelParams, ComputeDevice,
                   DeviceId, LOCAL, MobilityState, Position, ProfitParams,
                   SATELLITE, Task, task_profit)
from .clustering import Cluster, ClusterState


@dataclass(frozen=True)
class ScenarioPreset:
    name: str = "balanced"
    delay_sensitive_fraction: float = 0.0  # tasks drawn from the tight-deadline band
    delay_weight_scale: float = 1.0        # multiplier on profit delay sensitivity
    workload_scale: float = 1.0            # multiplier on the workload distribution

    def __post_init__(self):
        if not 0 <= self.delay_sensitive_fraction <= 1:
            raise ValueError("delay_sensitive_fraction must lie in [0, 1]")
        if self.delay_weight_scale <= 0 or self.workload_scale <= 0:
            raise ValueError("scenario scales must be positive")


SCENARIOS = {
    "balanced": ScenarioPreset("balanced"),
    "delay_sensitive": ScenarioPreset("delay_sensitive",
                                      delay_sensitive_fraction=0.3,
                                      delay_weight_scale=2.0),
    "compute_intensive": ScenarioPreset("compute_intensive",
                                        delay_weight_scale=0.5,
                                        workload_scale=1.5),
}


def default_bs_channel() -> ChannelParams:
    return ChannelParams(bandwidth=200e6, tx_power=1.0, tx_gain=10.0,
                         rx_gain=10.0, noise_power=1e-13,
                         path_loss_exponent=2.2, reference_distance=1.0,
                         carrier_frequency=2e9, shadowing_sigma_db=2.0)


def default_sat_channel() -> ChannelParams:
    # directional satcom antennas: high combined gain compensates the
    # 780 km link distance
    return ChannelParams(bandwidth=200e6, tx_power=5.0, tx_gain=1e3,
                         rx_gain=1e3, noise_power=1e-13,
                         path_loss_exponent=2.0, reference_distance=1.0,
                         carrier_frequency=20e9, shadowing_sigma_db=0.0)


@dataclass
class EnvConfig:
    area_side: float = 5000.0
    n_bs: int = 25
    n_uavs: int = 40
    bs_capacity_range: tuple[float, float] = (20e9, 40e9)
    local_capacity: float = 2e9
    satellite_capacity: float = 100e9
    uav_altitude: float = 100.0
    satellite_altitude: float = 780e3
    arrival_rate: float = 25.0            # tasks/s (Poisson)
    slot_seconds: float = 0.1
    episode_length: int = 200
    speed_mean: float = 10.0
    speed_std: float = 2.0
    max_turn_angle: float = math.pi / 4
    task_bits_range: tuple[float, float] = (10e6, 90e6)
    task_cycles_range: tuple[float, float] = (1000e6, 3000e6)
    deadline_range: tuple[float, float] = (0.0, 0.2)
    tight_deadline_range: tuple[float, float] = (0.0, 0.02)
    tight_payload_scale: float = 0.1      # tight tasks carry smaller payloads
    delay_sensitivity: float = 5.0        # lambda of the profit discount
    coverage_radius: float = 2000.0       # BS visibility radius around a centroid
    scenario: ScenarioPreset = field(default_factory=ScenarioPreset)
    bs_channel: ChannelParams = field(default_factory=default_bs_channel)
    sat_channel: ChannelParams = field(default_factory=default_sat_channel)

    @property
    def n_devices(self) -> int:
        # device vector layout: [local, bs_1..bs_n, satellite]
        return self.n_bs + 2

    @property
    def obs_dim(self) -> int:
        return 2 * self.n_devices + 5 + 3

    @property
    def act_dim(self) -> int:
        return self.n_devices + 1

    def profit_params(self) -> ProfitParams:
        return ProfitParams(self.delay_sensitivity * self.scenario.delay_weight_scale)

    def area(self) -> AreaBounds:
        return AreaBounds(0.0, self.area_side, 0.0, self.area_side)

    def device_id(self, index: int, origin_uav: int) -> DeviceId:
        """Map an action index in the device vector to a DeviceId."""
        if index == 0:
            return DeviceId(LOCAL, origin_uav)
        if index <= self.n_bs:
            return DeviceId(BASE_STATION, index)
        return DeviceId(SATELLITE)

    def device_index(self, device: DeviceId) -> int:
        if device.is_local:
            return 0
        if device.kind == BASE_STATION:
            return device.index
        return self.n_bs + 1


@dataclass(frozen=True)
class Action:
    device_choice: DeviceId
    priority: float                 # eta in [0, 1]
    encoding: np.ndarray | None = None  # stored replay encoding (probs + eta)

    def __post_init__(self):
        object.__setattr__(self, "priority", float(min(max(self.priority, 0.0), 1.0)))


@dataclass
class Observation:
    resources: np.ndarray       # normalized, device-vector layout
    mobility: np.ndarray        # normalized (x, y, z, heading, speed)
    rates: np.ndarray           # normalized, device-vector layout
    task_features: np.ndarray   # normalized (phi, rho, delta)

    def vector(self) -> np.ndarray:
        return np.concatenate([self.resources, self.mobility, self.rates,
                               self.task_features])


@dataclass
class TaskRecord:
    task: Task
    agent: int = -1
    device: DeviceId | None = None
    eta: float = 0.0
    transmission: float = 0.0
    queueing: float = 0.0
    computing: float = 0.0
    finish: float | None = None
    on_time: bool = False
    profit: float = 0.0

    @property
    def total(self) -> float | None:
        if self.finish is None:
            return None
        return self.queueing + self.transmission + self.computing


@dataclass
class StepOutcome:
    reward: float
    completed: list[tuple[int, float, float]]        # (task id, total delay, profit)
    violated: list[tuple[int, str]]                  # (task id, reason)
    next_observations: dict[int, Observation]


class DeviceQueueSim:
    """Non-preemptive priority queue for one compute device.

    Pending entries sort by eta descending, ties by arrival slot then task
    id. Service starts whenever the device is free and a task has arrived;
    among arrived tasks the highest-eta one is served.
    """

    def __init__(self, device: ComputeDevice):
        self.device = device
        self.pending: list[tuple[float, float, int, int, Task]] = []
        # entries: (arrival_time, eta, arrival_slot, task_id, task)
        self.next_free = 0.0

    def push(self, arrival_time: float, eta: float, task: Task) -> None:
        self.pending.append((arrival_time, eta, task.arrival_slot, task.id, task))

    def backlog_delay(self, now: float) -> float:
        """Residual busy time plus queued workload, in seconds."""
        waiting = sum(t.workload_cycles for *_, t in self.pending)
        return max(0.0, self.next_free - now) + waiting / self.device.capacity_hz

    def run_until(self, t_end: float) -> list[tuple[Task, float, float]]:
        """Start every service that begins before t_end; returns
        (task, service_start, finish) for each started task."""
        started = []
        while self.pending:
            t_cur = self.next_free
            arrived = [p for p in self.pending if p[0] <= t_cur]
            if not arrived:
                t_cur = min(p[0] for p in self.pending)
                if t_cur >= t_end:
                    break
                arrived = [p for p in self.pending if p[0] <= t_cur]
            if t_cur >= t_end:
                break
            best = min(arrived, key=lambda p: (-p[1], p[2], p[3]))
            self.pending.remove(best)
            task = best[4]
            finish = t_cur + task.workload_cycles / self.device.capacity_hz
            started.append((task, t_cur, finish))
            self.next_free = finish
        return started


def spawn_tasks(slot: int, rng: np.random.Generator, scenario: ScenarioPreset,
                cfg: EnvConfig, id_start: int) -> list[Task]:
    """Poisson batch of tasks for one slot, features per the configured
    uniform distributions (scenario presets reshape deadline/workload)."""
    count = int(rng.poisson(cfg.arrival_rate * cfg.slot_seconds))
    tasks = []
    for k in range(count):
        bits = rng.uniform(*cfg.task_bits_range)
        cycles = rng.uniform(*cfg.task_cycles_range) * scenario.workload_scale
        if rng.random() < scenario.delay_sensitive_fraction:
            # delay-critical tasks are lightweight (control/telemetry-sized),
            # otherwise a sub-20 ms deadline could never be met
            deadline = rng.uniform(*cfg.tight_deadline_range)
            bits *= cfg.tight_payload_scale
            cycles *= cfg.tight_payload_scale
        else:
            deadline = rng.uniform(*cfg.deadline_range)
        origin = int(rng.integers(cfg.n_uavs))
        tasks.append(Task(id=id_start + k, origin_uav=origin, data_bits=bits,
                          cycles_per_bit=cycles / bits, deadline=deadline,
                          arrival_slot=slot))
    return tasks


def compute_reward(completions: list[tuple[Task, float]],
                   params: ProfitParams) -> float:
    """Realized profit: sum of task_profit over tasks finished within their
    deadline; late tasks contribute zero. Shared by every agent."""
    reward = 0.0
    for task, delay in completions:
        if delay <= task.deadline + 1e-12:
            reward += task_profit(task, params)
    return reward


class SaginEnv:
    """One simulation instance. Deterministic given (config, seed, actions)."""

    def __init__(self, cfg: EnvConfig):
        self.cfg = cfg
        self._norm_rate = 5e9
        self._norm_resource = cfg.satellite_capacity
        self._initialized = False

    # -- lifecycle ---------------------------------------------------------

    def reset(self, seed: int, episode: int = 0) -> dict[int, Observation]:
        """Rebuild the topology and dynamics streams deterministically.

        The topology (BS layout, capacities, satellite) depends on the seed
        only, so device identities stay stable across episodes of one run;
        task arrivals, channel shadowing, and mobility draw from
        (seed, episode) streams.
        """
        cfg = self.cfg
        topo_ss = np.random.SeedSequence([seed, 0])
        dyn = np.random.SeedSequence([seed, 1, episode])
        init_ss, self._task_ss, self._chan_ss, self._mob_ss = dyn.spawn(4)
        rng = np.random.default_rng(topo_ss)
        init_rng = np.random.default_rng(init_ss)

        self.mobility: dict[int, MobilityState] = {}
        for i in range(cfg.n_uavs):
            pos = Position(init_rng.uniform(0, cfg.area_side),
                           init_rng.uniform(0, cfg.area_side), cfg.uav_altitude)
            heading = init_rng.uniform(0, 2 * math.pi)
            # speed re-drawn at episode reset only, clamped non-negative
            speed = max(0.0, init_rng.normal(cfg.speed_mean, cfg.speed_std))
            self.mobility[i] = MobilityState(pos, heading, speed)

        self.devices: dict[DeviceId, ComputeDevice] = {}
        for i in range(cfg.n_uavs):
            did = DeviceId(LOCAL, i)
            self.devices[did] = ComputeDevice(did, self.mobility[i].position,
                                              cfg.local_capacity)
        for j in range(1, cfg.n_bs + 1):
            did = DeviceId(BASE_STATION, j)
            pos = Position(rng.uniform(0, cfg.area_side),
                           rng.uniform(0, cfg.area_side), 0.0)
            cap = rng.uniform(*cfg.bs_capacity_range)
            self.devices[did] = ComputeDevice(did, pos, cap)
        sat_id = DeviceId(SATELLITE)
        sat_pos = Position(cfg.area_side / 2, cfg.area_side / 2,
                           cfg.satellite_altitude)
        self.devices[sat_id] = ComputeDevice(sat_id, sat_pos,
                                             cfg.satellite_capacity)

        self.queues = {did: DeviceQueueSim(dev)
                       for did, dev in self.devices.items()}
        self.uplink_free = {i: 0.0 for i in range(cfg.n_uavs)}
        self.task_rng = np.random.default_rng(self._task_ss)
        self.chan_rng = np.random.default_rng(self._chan_ss)
        self.mob_rng = np.random.default_rng(self._mob_ss)

        self.slot = 0
        self.next_task_id = 0
        self.records: dict[int, TaskRecord] = {}
        self.unharvested: list[tuple[Task, float, float]] = []  # (task, start, finish)
        self.spawned_count = 0
        self.completed_ids: set[int] = set()
        self.violated_ids: set[int] = set()
        self.done = False
        self.device_busy_cycles = {did: 0.0 for did in self.devices}

        self._spawn_and_surface()
        singleton = ClusterState(
            clusters=[Cluster(head=i, members={i},
                              centroid=self.mobility[i].position)
                      for i in range(cfg.n_uavs)])
        return self._next_observations(singleton)

    def _spawn_and_surface(self) -> None:
        cfg = self.cfg
        tasks = spawn_tasks(self.slot, self.task_rng, cfg.scenario, cfg,
                            self.next_task_id)
        self.next_task_id += len(tasks)
        self.spawned_count += len(tasks)
        self.pending_tasks = tasks
        for t in tasks:
            self.records[t.id] = TaskRecord(task=t)
        self._refresh_rates()

    def _refresh_rates(self) -> None:
        """Per-slot link rates from every UAV to every device, including a
        fresh shadowing draw per (UAV, device) pair."""
        cfg = self.cfg
        self.rates = np.zeros((cfg.n_uavs, cfg.n_devices))
        self.distances = np.zeros((cfg.n_uavs, cfg.n_devices))
        origins = {t.origin_uav for t in self.pending_tasks}
        for i in range(cfg.n_uavs):
            pos = self.mobility[i].position
            for idx in range(1, cfg.n_devices):
                did = cfg.device_id(idx, i)
                params = cfg.sat_channel if did.is_satellite else cfg.bs_channel
                dist = pos.distance_to(self.devices[did].position)
                shadow = (self.chan_rng.normal(0.0, params.shadowing_sigma_db)
                          if params.shadowing_sigma_db > 0 else 0.0)
                pl = core.path_loss_db(dist, params, shadow)
                self.rates[i, idx] = core.data_rate(pl, params)
                self.distances[i, idx] = dist

    # -- observations ------------------------------------------------------

    def build_observation(self, agent: int, cluster_state: ClusterState,
                          member: int, task: Task) -> Observation:
        cfg = self.cfg
        cluster = next((c for c in cluster_state.clusters if c.head == agent), None)
        if cluster is None or member not in cluster.members:
            raise ValueError(f"UAV {member} is not a member of agent {agent}'s cluster")
        n_clusters = max(1, len(cluster_state.clusters))

        resources = np.zeros(cfg.n_devices)
        resources[0] = cfg.local_capacity
        for j in range(1, cfg.n_bs + 1):
            did = DeviceId(BASE_STATION, j)
            bs_pos = self.devices[did].position
            covering = sum(
                1 for c in cluster_state.clusters
                if c.centroid.distance_to(bs_pos) <= cfg.coverage_radius)
            if cluster.centroid.distance_to(bs_pos) <= cfg.coverage_radius:
                resources[j] = self.devices[did].capacity_hz / max(covering, 1)
        resources[cfg.n_bs + 1] = cfg.satellite_capacity / n_clusters

        mob = self.mobility[member]
        mobility = np.array([
            mob.position.x / cfg.area_side,
            mob.position.y / cfg.area_side,
            mob.position.z / max(cfg.uav_altitude, 1.0),
            mob.heading / (2 * math.pi),
            mob.speed / 20.0,
        ])
        rates = self.rates[member] / self._norm_rate
        feats = np.array([
            task.data_bits / cfg.task_bits_range[1],
            task.cycles_per_bit / (cfg.task_cycles_range[1] / cfg.task_bits_range[0]),
            task.deadline / max(cfg.deadline_range[1], 1e-9),
        ])
        obs = Observation(resources / self._norm_resource, mobility, rates, feats)
        vec = obs.vector()
        if not np.all(np.isfinite(vec)):
            raise ValueError("non-finite observation")
        return obs

    def zero_observation(self) -> Observation:
        cfg = self.cfg
        return Observation(np.zeros(cfg.n_devices), np.zeros(5),
                           np.zeros(cfg.n_devices), np.zeros(3))

    def _next_observations(self, cluster_state: ClusterState
                           ) -> dict[int, Observation]:
        """Per-head observation of its first surfaced member task (zero
        observation when the cluster has no pending task this slot)."""
        obs: dict[int, Observation] = {}
        for c in cluster_state.clusters:
            chosen = None
            for t in self.pending_tasks:
                if t.origin_uav in c.members:
                    chosen = t
                    break
            if chosen is None:
                obs[c.head] = self.zero_observation()
            else:
                obs[c.head] = self.build_observation(c.head, cluster_state,
                                                     chosen.origin_uav, chosen)
        return obs

    # -- delay estimation (greedy rule, isolated UAVs) ---------------------

    def estimate_total_delay(self, task: Task, device_index: int,
                             backlog_snapshot: dict[DeviceId, float]) -> float:
        """Transmission + computing + snapshot backlog for one candidate."""
        did = self.cfg.device_id(device_index, task.origin_uav)
        dev = self.devices[did]
        if did.is_local:
            trans = 0.0
        else:
            rate = self.rates[task.origin_uav, device_index]
            if rate <= 0:
                return float("inf")
            trans = core.transmission_delay(
                task, rate, did, self.distances[task.origin_uav, device_index],
                self.cfg.sat_channel if did.is_satellite else self.cfg.bs_channel)
        return trans + task.workload_cycles / dev.capacity_hz \
            + backlog_snapshot.get(did, 0.0)

    def backlog_snapshot(self) -> dict[DeviceId, float]:
        now = self.slot * self.cfg.slot_seconds
        return {did: q.backlog_delay(now) for did, q in self.queues.items()}

    def greedy_action(self, task: Task,
                      backlog_snapshot: dict[DeviceId, float]) -> Action:
        """Minimum-estimated-delay device, eta = 1 - delta/delta_max."""
        cfg = self.cfg
        delays = [self.estimate_total_delay(task, idx, backlog_snapshot)
                  for idx in range(cfg.n_devices)]
        best = int(np.argmin(delays))
        eta = 1.0 - task.deadline / max(cfg.deadline_range[1], 1e-9)
        enc = np.zeros(cfg.act_dim)
        enc[best] = 1.0
        enc[-1] = eta
        return Action(cfg.device_id(best, task.origin_uav), eta, enc)

    # -- stepping ----------------------------------------------------------

    def apply_actions(self, actions: dict[int, tuple[int, Action]]) -> None:
        """Insert this slot's decided tasks into uplink + device queues.

        `actions` maps task id to (agent id, Action); every pending task
        must be covered exactly once (constraint C1 by construction).
        """
        cfg = self.cfg
        pending_ids = [t.id for t in self.pending_tasks]
        if sorted(actions) != sorted(pending_ids):
            raise ValueError("actions must cover all surfaced tasks exactly once")
        now = self.slot * cfg.slot_seconds
        for task in self.pending_tasks:  # arrival order
            agent, action = actions[task.id]
            did = action.device_choice
            rec = self.records[task.id]
            rec.agent = agent
            rec.device = did
            rec.eta = action.priority
            if did.is_local:
                arrival = now
                rec.transmission = 0.0
            else:
                idx = cfg.device_index(did)
                rate = self.rates[task.origin_uav, idx]
                if rate <= 0:
                    raise ValueError(f"unreachable link for task {task.id}")
                upload_start = max(self.uplink_free[task.origin_uav], now)
                upload_time = task.data_bits / rate
                params = cfg.sat_channel if did.is_satellite else cfg.bs_channel
                prop = core.propagation_delay(
                    did, self.distances[task.origin_uav, idx], params)
                arrival = upload_start + upload_time + prop
                self.uplink_free[task.origin_uav] = upload_start + upload_time
                rec.transmission = upload_time + prop
            rec.computing = task.workload_cycles / self.devices[did].capacity_hz
            rec.queueing = arrival - now - rec.transmission  # uplink wait so far
            self.queues[did].push(arrival, action.priority, task)

    def step(self, actions: dict[int, tuple[int, Action]],
             cluster_state: ClusterState | None = None) -> StepOutcome:
        if self.done:
            raise RuntimeError("cannot step a terminated episode")
        cfg = self.cfg
        self.apply_actions(actions)

        slot_end = (self.slot + 1) * cfg.slot_seconds
        for did, q in self.queues.items():
            for task, start, finish in q.run_until(slot_end):
                rec = self.records[task.id]
                # queueing = uplink wait + wait at the device
                arrival_at_device = (task.arrival_slot * cfg.slot_seconds
                                     + rec.queueing + rec.transmission)
                rec.queueing += start - arrival_at_device
                rec.finish = finish
                self.unharvested.append((task, start, finish))
                self.device_busy_cycles[did] += task.workload_cycles

        completed, violated, reward_items = [], [], []
        still = []
        for task, start, finish in self.unharvested:
            if finish <= slot_end + 1e-12:
                rec = self.records[task.id]
                delay = finish - task.arrival_slot * cfg.slot_seconds
                rec.on_time = delay <= task.deadline + 1e-12
                if rec.on_time:
                    rec.profit = task_profit(task, cfg.profit_params())
                    completed.append((task.id, delay, rec.profit))
                    self.completed_ids.add(task.id)
                    reward_items.append((task, delay))
                else:
                    violated.append((task.id, "deadline"))
                    self.violated_ids.add(task.id)
            else:
                still.append((task, start, finish))
        self.unharvested = still
        reward = compute_reward(reward_items, cfg.profit_params())

        for i in range(cfg.n_uavs):
            self.mobility[i] = core.advance_mobility(
                self.mobility[i], cfg.slot_seconds, self.mob_rng, cfg.area(),
                cfg.max_turn_angle)
        self.slot += 1
        if self.slot >= cfg.episode_length:
            self.done = True
            self.pending_tasks = []
            next_obs = {}
        else:
            self._spawn_and_surface()
            if cluster_state is None:
                cluster_state = ClusterState(
                    clusters=[Cluster(head=i, members={i},
                                      centroid=self.mobility[i].position)
                              for i in range(cfg.n_uavs)])
            next_obs = self._next_observations(cluster_state)
        return StepOutcome(reward, completed, violated, next_obs)

    # -- bookkeeping -------------------------------------------------------

    def conservation_counts(self) -> tuple[int, int, int]:
        unfinished = (self.spawned_count - len(self.completed_ids)
                      - len(self.violated_ids))
        return len(self.completed_ids), len(self.violated_ids), unfinished

    def trace_lines(self) -> list[str]:
        lines = []
        for tid in sorted(self.records):
            r = self.records[tid]
            dev = "-" if r.device is None else f"{r.device.kind}{r.device.index}"
            total = r.total
            lines.append(
                f"{r.task.arrival_slot} {tid} {r.task.origin_uav} {dev} "
                f"{r.eta:.6f} {r.queueing:.6f} {r.transmission:.6f} "
                f"{r.computing:.6f} {-1.0 if total is None else total:.6f} "
                f"{r.profit:.6f} {int(r.on_time)}")
        return lines


@dataclass
class AuditReport:
    c1_violations: int = 0
    c2_misses: int = 0
    c3_violations: int = 0
    c4_violations: int = 0
    on_time_profit: float = 0.0


def audit_constraints(records: dict[int, TaskRecord], cfg: EnvConfig) -> AuditReport:
    """Independent pass over an episode trace.

    C1/C3 (single binary destination) hold by construction and are
    re-verified; C2 misses are counted (legal, unprofitable); C4 checks the
    rolling per-device cycle budget capacity*slot minus carried backlog.
    """
    report = AuditReport()
    admitted: dict[DeviceId, dict[int, float]] = {}
    for rec in records.values():
        if rec.device is None:
            report.c1_violations += 1
            continue
        idx = cfg.device_index(rec.device)
        if not 0 <= idx < cfg.n_devices:
            report.c3_violations += 1
        if rec.finish is not None and not rec.on_time:
            report.c2_misses += 1
        if rec.on_time:
            report.on_time_profit += rec.profit
        admitted.setdefault(rec.device, {})
        slot = rec.task.arrival_slot
        admitted[rec.device][slot] = (admitted[rec.device].get(slot, 0.0)
                                      + rec.task.workload_cycles)
    for device, per_slot in admitted.items():
        if device.is_local:
            capacity = cfg.local_capacity
        elif device.is_satellite:
            capacity = cfg.satellite_capacity
        else:
            capacity = cfg.bs_capacity_range[1]
        budget = capacity * cfg.slot_seconds
        backlog = 0.0
        for slot in range(max(per_slot) + 1):
            load = per_slot.get(slot, 0.0)
            if load > budget - backlog:
                report.c4_violations += 1
            backlog = max(0.0, backlog + load - budget)
    return report

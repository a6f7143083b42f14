"""Centralized-training / distributed-execution engine: per-cluster-head
actors, one global critic over joint observations and actions, FIFO replay,
Ornstein-Uhlenbeck exploration, and the orchestration loop that couples
dynamic clustering with learning.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import nn
from .clustering import (Cluster, ClusterConfig, ClusterState, kmeans_cluster,
                         maintenance_step, optimal_cluster_count,
                         should_recluster, snapshot_lines)
from .env import Action, EnvConfig, Observation, SaginEnv


@dataclass
class TrainConfig:
    gamma: float = 0.95
    tau: float = 0.01
    batch_size: int = 64
    update_period: int = 10          # slots between train cycles
    warmup_transitions: int = 1000
    buffer_capacity: int = 100000
    actor_lr: float = 0.01
    critic_lr: float = 0.001
    actor_hidden: tuple[int, int] = (128, 128)
    critic_hidden: tuple[int, int] = (256, 128)
    ou_sigma: float = 0.3
    ou_theta: float = 0.15
    ou_sigma_decay: float = 0.99  # per-episode exploration annealing
    reward_scale: float = 1e-9   # profit units are ~1e9 cycles; keep critic
                                 # targets O(1) for stable regression

    def __post_init__(self):
        if not 0 < self.tau <= 1:
            raise ValueError("tau must lie in (0, 1]")
        if not 0 <= self.gamma < 1:
            raise ValueError("gamma must lie in [0, 1)")


class OUNoise:
    """Mean-reverting exploration noise, one independent stream per agent."""

    def __init__(self, dim: int, rng: np.random.Generator,
                 sigma: float = 0.3, theta: float = 0.15, mu: float = 0.0):
        self.dim = dim
        self.rng = rng
        self.sigma = sigma
        self.theta = theta
        self.mu = mu
        self.reset()

    def reset(self) -> None:
        self.state = np.full(self.dim, self.mu)

    def sample(self) -> np.ndarray:
        dx = (self.theta * (self.mu - self.state)
              + self.sigma * self.rng.standard_normal(self.dim))
        self.state = self.state + dx
        return self.state


@dataclass
class JointCodec:
    """Fixed-width joint vector layout: per-agent slots padded to
    max_agents, plus a presence mask."""
    max_agents: int
    obs_dim: int
    act_dim: int

    @property
    def joint_obs_dim(self) -> int:
        return self.max_agents * self.obs_dim

    @property
    def joint_act_dim(self) -> int:
        return self.max_agents * self.act_dim

    @property
    def critic_in_dim(self) -> int:
        return self.joint_obs_dim + self.joint_act_dim + self.max_agents

    def obs_slice(self, r: int) -> slice:
        return slice(r * self.obs_dim, (r + 1) * self.obs_dim)

    def act_slice(self, r: int) -> slice:
        return slice(r * self.act_dim, (r + 1) * self.act_dim)

    def critic_input(self, joint_obs: np.ndarray, joint_act: np.ndarray,
                     mask: np.ndarray) -> np.ndarray:
        return np.concatenate([joint_obs, joint_act, mask], axis=-1)


class ReplayBuffer:
    """FIFO ring of joint transitions with uniform batch sampling."""

    def __init__(self, capacity: int, codec: JointCodec):
        self.capacity = capacity
        self.codec = codec
        self.joint_obs = np.zeros((capacity, codec.joint_obs_dim))
        self.joint_act = np.zeros((capacity, codec.joint_act_dim))
        self.mask = np.zeros((capacity, codec.max_agents))
        self.reward = np.zeros(capacity)
        self.next_joint_obs = np.zeros((capacity, codec.joint_obs_dim))
        self.size = 0
        self.cursor = 0

    def push(self, joint_obs, joint_act, mask, reward, next_joint_obs) -> None:
        i = self.cursor
        self.joint_obs[i] = joint_obs
        self.joint_act[i] = joint_act
        self.mask[i] = mask
        self.reward[i] = reward
        self.next_joint_obs[i] = next_joint_obs
        self.cursor = (self.cursor + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)

    def sample(self, batch_size: int, rng: np.random.Generator):
        idx = rng.choice(self.size, size=batch_size, replace=False)
        return (self.joint_obs[idx], self.joint_act[idx], self.mask[idx],
                self.reward[idx], self.next_joint_obs[idx])


@dataclass
class AgentBundle:
    agent_id: int  # head id
    actor: nn.DenseNet
    target_actor: nn.DenseNet
    noise: OUNoise
    optimizer: nn.AdamState


def make_agent(agent_id: int, obs_dim: int, n_devices: int,
               tcfg: TrainConfig, rng: np.random.Generator) -> AgentBundle:
    act_dim = n_devices + 1
    heads = [("softmax", n_devices), ("sigmoid", 1)]
    actor = nn.make_net([obs_dim, *tcfg.actor_hidden, act_dim], heads, rng)
    target = actor.copy()
    noise = OUNoise(act_dim, np.random.default_rng(rng.integers(2**63)),
                    tcfg.ou_sigma, tcfg.ou_theta)
    opt = nn.AdamState(learning_rate=tcfg.actor_lr, n_params=actor.n_params)
    return AgentBundle(agent_id, actor, target, noise, opt)


def make_critic(in_dim: int, tcfg: TrainConfig, rng: np.random.Generator
                ) -> tuple[nn.DenseNet, nn.DenseNet, nn.AdamState]:
    critic = nn.make_net([in_dim, *tcfg.critic_hidden, 1],
                         [("identity", 1)], rng)
    target = critic.copy()
    opt = nn.AdamState(learning_rate=tcfg.critic_lr, n_params=critic.n_params)
    return critic, target, opt


def select_action(bundle: AgentBundle, observation: Observation,
                  explore: bool, env_cfg: EnvConfig, origin_uav: int) -> Action:
    """Actor forward; exploration adds OU noise to the pre-head outputs.

    Execution takes the argmax device (one-hot, so C1/C3 hold by
    construction) and clamps the priority; the replay encoding keeps the
    softmax probabilities plus the priority.
    """
    vec = observation.vector()
    y, cache = nn.forward(bundle.actor, vec)
    if explore:
        z = cache.z_out[0] + bundle.noise.sample()
        y = nn.apply_heads(z, bundle.actor.heads)
    if not np.all(np.isfinite(y)):
        raise FloatingPointError(f"non-finite actor output for agent {bundle.agent_id}")
    n_dev = env_cfg.n_devices
    device_index = int(np.argmax(y[:n_dev]))
    priority = float(np.clip(y[n_dev], 0.0, 1.0))
    encoding = np.concatenate([y[:n_dev], [priority]])
    return Action(env_cfg.device_id(device_index, origin_uav), priority, encoding)


def critic_target(critic_target_net: nn.DenseNet,
                  target_actors: list[nn.DenseNet],
                  batch, codec: JointCodec, tcfg: TrainConfig) -> np.ndarray:
    """y = r + gamma * Q'(o', a') with a' from each target actor on its own
    next observation slot."""
    _, _, mask, reward, next_obs = batch
    batch_n = next_obs.shape[0]
    next_act = np.zeros((batch_n, codec.joint_act_dim))
    for r in range(codec.max_agents):
        actor = target_actors[min(r, len(target_actors) - 1)]
        o_r = next_obs[:, codec.obs_slice(r)]
        a_r, _ = nn.forward(actor, o_r)
        next_act[:, codec.act_slice(r)] = a_r * mask[:, r:r + 1]
    x = codec.critic_input(next_obs, next_act, mask)
    q_next, _ = nn.forward(critic_target_net, x)
    return reward + tcfg.gamma * q_next[:, 0]


def critic_update(critic: nn.DenseNet, optimizer: nn.AdamState,
                  batch, targets: np.ndarray, codec: JointCodec) -> float:
    """One MSE descent step on the centralized critic; returns the pre-step
    loss. A non-finite loss aborts without touching parameters."""
    joint_obs, joint_act, mask, _, _ = batch
    x = codec.critic_input(joint_obs, joint_act, mask)
    q, cache = nn.forward(critic, x)
    err = q[:, 0] - targets
    loss = float(np.mean(err ** 2))
    if not np.isfinite(loss):
        raise FloatingPointError("non-finite critic loss")
    dq = (2.0 * err / err.size)[:, None]
    grads, _ = nn.backward(critic, cache, dq)
    critic.set_flat(nn.adam_step(optimizer, critic.get_flat(), grads))
    return loss


def actor_update(bundle: AgentBundle, slot_index: int, critic: nn.DenseNet,
                 batch, codec: JointCodec) -> float:
    """Deterministic policy-gradient ascent: the agent's slice of the joint
    action is replaced by its actor's fresh output, the critic's input
    gradient is chained back through the actor, and one Adam ascent step is
    taken. Returns the mean Q objective estimate."""
    joint_obs, joint_act, mask, _, _ = batch
    r = slot_index
    o_r = joint_obs[:, codec.obs_slice(r)]
    a_r, actor_cache = nn.forward(bundle.actor, o_r)
    act_mod = joint_act.copy()
    act_mod[:, codec.act_slice(r)] = a_r
    x = codec.critic_input(joint_obs, act_mod, mask)
    q, critic_cache = nn.forward(critic, x)
    objective = float(np.mean(q))
    dq = np.full_like(q, 1.0 / q.shape[0])
    _, dx = nn.backward(critic, critic_cache, dq)
    obs_off = codec.joint_obs_dim
    da = dx[:, obs_off + codec.act_slice(r).start:
            obs_off + codec.act_slice(r).stop]
    da = da * mask[:, r:r + 1]
    grads, _ = nn.backward(bundle.actor, actor_cache, da)
    if not np.all(np.isfinite(grads)):
        raise FloatingPointError("non-finite actor gradient")
    # ascent: negate the gradient for the (descent-form) Adam step
    bundle.actor.set_flat(nn.adam_step(bundle.optimizer,
                                       bundle.actor.get_flat(), -grads))
    return objective


def train_cycle(agents: list[AgentBundle], critic: nn.DenseNet,
                critic_target_net: nn.DenseNet, critic_opt: nn.AdamState,
                buffer: ReplayBuffer, tcfg: TrainConfig,
                rng: np.random.Generator) -> dict | None:
    """Sample, update critic then every actor, soft-update all targets.

    Skips (returning None) while the buffer is below warmup/batch size.
    """
    if buffer.size < max(tcfg.warmup_transitions, tcfg.batch_size):
        return None
    batch = buffer.sample(tcfg.batch_size, rng)
    targets = critic_target(critic_target_net,
                            [a.target_actor for a in agents], batch,
                            buffer.codec, tcfg)
    loss = critic_update(critic, critic_opt, batch, targets, buffer.codec)
    objectives = [actor_update(agent, r, critic, batch, buffer.codec)
                  for r, agent in enumerate(agents)]
    nn.soft_update(critic_target_net, critic, tcfg.tau)
    for agent in agents:
        nn.soft_update(agent.target_actor, agent.actor, tcfg.tau)
    return {"critic_loss": loss,
            "actor_objective": float(np.mean(objectives))}


# ---------------------------------------------------------------------------
# orchestration

@dataclass
class MetricsRow:
    episode: int
    slot: int
    reward: float
    cumulative_profit: float
    completion_rate: float
    jain_index: float
    cluster_count: int
    critic_loss: float = float("nan")
    actor_objective: float = float("nan")


@dataclass
class RunResult:
    rows: list[MetricsRow]
    episode_profits: list[float]
    episode_seconds: list[float]
    agents: list[AgentBundle] = field(default_factory=list)
    critic: nn.DenseNet | None = None
    cluster_log: list[str] = field(default_factory=list)
    tight_profit: float = 0.0   # on-time profit from deadlines <= 20 ms
    total_on_time_profit: float = 0.0
    spawned: int = 0
    on_time: int = 0


def jain_index(utilizations: np.ndarray) -> float:
    used = utilizations[utilizations > 0]
    if used.size == 0:
        return 1.0
    return float(used.sum() ** 2 / (used.size * (used ** 2).sum()))


def _recluster(env: SaginEnv, ccfg: ClusterConfig,
               rng: np.random.Generator) -> ClusterState:
    positions = {i: m.position for i, m in env.mobility.items()}
    k = optimal_cluster_count(env.cfg.n_uavs, env.cfg.area_side ** 2, ccfg)
    return kmeans_cluster(positions, k, rng, ccfg)


def _inherit_agents(cluster_state: ClusterState,
                    old_agents: dict[int, AgentBundle],
                    env_cfg: EnvConfig, tcfg: TrainConfig,
                    rng: np.random.Generator,
                    old_positions: dict[int, "object"]) -> dict[int, AgentBundle]:
    """One bundle per head; a new head inherits the nearest previous head's
    actor parameters instead of restarting cold."""
    agents: dict[int, AgentBundle] = {}
    for cluster in cluster_state.clusters:
        head = cluster.head
        if head in old_agents:
            agents[head] = old_agents[head]
            continue
        bundle = make_agent(head, env_cfg.obs_dim, env_cfg.n_devices, tcfg, rng)
        if old_agents:
            donor_id = min(
                old_agents,
                key=lambda h: (cluster.centroid.distance_to(old_positions[h]), h))
            donor = old_agents[donor_id]
            bundle.actor.set_flat(donor.actor.get_flat())
            bundle.target_actor.set_flat(donor.target_actor.get_flat())
        agents[head] = bundle
    return agents


def run_training(env_cfg: EnvConfig, ccfg: ClusterConfig, tcfg: TrainConfig,
                 seed: int, episodes: int, mode: str = "cmaddpg",
                 explore: bool = True) -> RunResult:
    """Shared training loop for cmaddpg (clustered CTDE), maddpg (per-UAV
    agents, shared critic), and maac (per-UAV agents, independent critics).
    """
    if mode not in ("cmaddpg", "maddpg", "maac"):
        raise ValueError(f"unknown training mode {mode!r}")
    env = SaginEnv(env_cfg)
    master = np.random.SeedSequence(seed)
    net_ss, sample_ss, cluster_ss = master.spawn(3)
    net_rng = np.random.default_rng(net_ss)
    sample_rng = np.random.default_rng(sample_ss)
    cluster_rng = np.random.default_rng(cluster_ss)

    codec = JointCodec(env_cfg.n_uavs, env_cfg.obs_dim, env_cfg.act_dim)
    buffer = ReplayBuffer(tcfg.buffer_capacity, codec)
    per_agent_critics = mode == "maac"
    single_in = env_cfg.obs_dim + env_cfg.act_dim

    agents: dict[int, AgentBundle] = {}
    critics: dict[int, tuple] = {}     # maac: head id -> (net, target, opt)
    if mode == "cmaddpg":
        critic, critic_tgt, critic_opt = make_critic(codec.critic_in_dim,
                                                     tcfg, net_rng)
    else:
        for i in range(env_cfg.n_uavs):
            agents[i] = make_agent(i, env_cfg.obs_dim, env_cfg.n_devices,
                                   tcfg, net_rng)
        if per_agent_critics:
            for i in range(env_cfg.n_uavs):
                critics[i] = make_critic(single_in, tcfg, net_rng)
            critic = critic_tgt = critic_opt = None
        else:
            critic, critic_tgt, critic_opt = make_critic(codec.critic_in_dim,
                                                         tcfg, net_rng)

    result = RunResult(rows=[], episode_profits=[], episode_seconds=[])
    cumulative_profit = 0.0
    spawned_total = 0
    ontime_total = 0
    busy_cycles: dict = {}
    global_slot = 0
    last_loss = float("nan")
    last_obj = float("nan")

    cluster_state: ClusterState | None = None
    for episode in range(episodes):
        t_ep = time.perf_counter()
        env.reset(seed, episode)
        sigma = tcfg.ou_sigma * tcfg.ou_sigma_decay ** episode
        for bundle in agents.values():
            bundle.noise.reset()
            bundle.noise.sigma = sigma
        episode_profit = 0.0
        prev_spawned = env.spawned_count

        for slot in range(env_cfg.episode_length):
            positions = {i: m.position for i, m in env.mobility.items()}
            if mode == "cmaddpg":
                if cluster_state is None or should_recluster(global_slot, ccfg):
                    old_positions = {h: positions[h] for h in agents}
                    cluster_state = _recluster(env, ccfg, cluster_rng)
                    agents = _inherit_agents(cluster_state, agents, env_cfg,
                                             tcfg, net_rng, old_positions)
                    for bundle in agents.values():
                        bundle.noise.sigma = sigma
                else:
                    cluster_state, events = maintenance_step(
                        cluster_state, positions, ccfg, global_slot)
                    for ev in events:
                        if ev.kind == "head_replaced":
                            bundle = agents.pop(ev.subject)
                            bundle.agent_id = ev.target
                            agents[ev.target] = bundle
                result.cluster_log.extend(snapshot_lines(cluster_state,
                                                         global_slot))
            else:
                cluster_state = ClusterState(
                    clusters=[Cluster(head=i, members={i},
                                      centroid=positions[i])
                              for i in range(env_cfg.n_uavs)])

            head_rank = {h: r for r, h in enumerate(sorted(agents))}
            head_of = {}
            for c in cluster_state.clusters:
                for m in c.members:
                    head_of[m] = c.head

            slot_obs: dict[int, Observation] = {}
            slot_act: dict[int, np.ndarray] = {}
            actions: dict[int, tuple[int, Action]] = {}
            snapshot = env.backlog_snapshot()
            for task in env.pending_tasks:
                head = head_of.get(task.origin_uav)
                if head is None or head not in agents:
                    # isolated UAV: fixed greedy fallback rule
                    actions[task.id] = (-1, env.greedy_action(task, snapshot))
                    continue
                obs = env.build_observation(head, cluster_state,
                                           task.origin_uav, task)
                action = select_action(agents[head], obs, explore, env_cfg,
                                       task.origin_uav)
                actions[task.id] = (head, action)
                if head not in slot_obs:
                    slot_obs[head] = obs
                    slot_act[head] = action.encoding

            outcome = env.step(actions, cluster_state)
            episode_profit += outcome.reward
            cumulative_profit += outcome.reward

            joint_obs = np.zeros(codec.joint_obs_dim)
            joint_act = np.zeros(codec.joint_act_dim)
            joint_next = np.zeros(codec.joint_obs_dim)
            mask = np.zeros(codec.max_agents)
            for head, r in head_rank.items():
                mask[r] = 1.0
                if head in slot_obs:
                    joint_obs[codec.obs_slice(r)] = slot_obs[head].vector()
                    joint_act[codec.act_slice(r)] = slot_act[head]
                nxt = outcome.next_observations.get(head)
                if nxt is not None:
                    joint_next[codec.obs_slice(r)] = nxt.vector()
            buffer.push(joint_obs, joint_act, mask,
                        outcome.reward * tcfg.reward_scale, joint_next)

            if global_slot % tcfg.update_period == 0:
                ordered = [agents[h] for h in sorted(agents)]
                if per_agent_critics:
                    metrics = _maac_train_cycle(ordered, critics, buffer,
                                                codec, tcfg, sample_rng)
                else:
                    metrics = train_cycle(ordered, critic, critic_tgt,
                                          critic_opt, buffer, tcfg, sample_rng)
                if metrics:
                    last_loss = metrics["critic_loss"]
                    last_obj = metrics["actor_objective"]

            spawned_total_now = spawned_total + (env.spawned_count
                                                 - prev_spawned)
            ontime_now = ontime_total + len(env.completed_ids)
            util = np.array([busy_cycles.get(d, 0.0) + env.device_busy_cycles[d]
                             for d in env.device_busy_cycles])
            result.rows.append(MetricsRow(
                episode=episode, slot=slot, reward=outcome.reward,
                cumulative_profit=cumulative_profit,
                completion_rate=(ontime_now / spawned_total_now
                                 if spawned_total_now else 0.0),
                jain_index=jain_index(util),
                cluster_count=len(agents) if agents else len(cluster_state.clusters),
                critic_loss=last_loss, actor_objective=last_obj))
            global_slot += 1

        spawned_total += env.spawned_count - prev_spawned
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

    result.agents = [agents[h] for h in sorted(agents)]
    result.critic = critic
    result.spawned = spawned_total
    result.on_time = ontime_total
    return result


def _maac_train_cycle(agents: list[AgentBundle], critics: dict[int, tuple],
                      buffer: ReplayBuffer, codec: JointCodec,
                      tcfg: TrainConfig, rng: np.random.Generator
                      ) -> dict | None:
    """Independent-critic variant: each agent's critic consumes only its own
    observation and action; no joint inputs anywhere."""
    if buffer.size < max(tcfg.warmup_transitions, tcfg.batch_size):
        return None
    batch = buffer.sample(tcfg.batch_size, rng)
    joint_obs, joint_act, mask, reward, next_obs = batch
    losses, objectives = [], []
    for r, agent in enumerate(agents):
        net, target_net, opt = critics[agent.agent_id]
        o_r = joint_obs[:, codec.obs_slice(r)]
        a_r = joint_act[:, codec.act_slice(r)]
        no_r = next_obs[:, codec.obs_slice(r)]
        na_r, _ = nn.forward(agent.target_actor, no_r)
        qn, _ = nn.forward(target_net, np.concatenate([no_r, na_r], axis=1))
        y = reward + tcfg.gamma * qn[:, 0]
        x = np.concatenate([o_r, a_r], axis=1)
        q, cache = nn.forward(net, x)
        err = q[:, 0] - y
        loss = float(np.mean(err ** 2))
        dq = (2.0 * err / err.size)[:, None]
        grads, _ = nn.backward(net, cache, dq)
        net.set_flat(nn.adam_step(opt, net.get_flat(), grads))
        losses.append(loss)

        a_new, actor_cache = nn.forward(agent.actor, o_r)
        x2 = np.concatenate([o_r, a_new], axis=1)
        q2, cache2 = nn.forward(net, x2)
        objectives.append(float(np.mean(q2)))
        dq2 = np.full_like(q2, 1.0 / q2.shape[0])
        _, dx2 = nn.backward(net, cache2, dq2)
        da = dx2[:, codec.obs_dim:]
        agrads, _ = nn.backward(agent.actor, actor_cache, da)
        agent.actor.set_flat(nn.adam_step(agent.optimizer,
                                          agent.actor.get_flat(), -agrads))
        nn.soft_update(target_net, net, tcfg.tau)
        nn.soft_update(agent.target_actor, agent.actor, tcfg.tau)
    return {"critic_loss": float(np.mean(losses)),
            "actor_objective": float(np.mean(objectives))}


def cmaddpg_run(env_cfg: EnvConfig, ccfg: ClusterConfig, tcfg: TrainConfig,
                seed: int, episodes: int) -> RunResult:
    """Full clustered CTDE run (Alg. 3 style loop)."""
    return run_training(env_cfg, ccfg, tcfg, seed, episodes, mode="cmaddpg")


def save_run_checkpoints(result: RunResult, out_dir: str | Path) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    manifest = {"networks": []}
    for bundle in result.agents:
        name = f"actor_{bundle.agent_id}.bin"
        nn.save_checkpoint(bundle.actor, out / name)
        manifest["networks"].append({"role": "actor", "agent": bundle.agent_id,
                                     "file": name})
    if result.critic is not None:
        nn.save_checkpoint(result.critic, out / "critic.bin")
        manifest["networks"].append({"role": "critic", "file": "critic.bin"})
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2))

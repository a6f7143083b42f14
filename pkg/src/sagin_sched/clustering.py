"""Dynamic UAV clustering: centralized K-Means seeding with an analytically
chosen cluster count, plus the distributed per-slot maintenance protocol
(join/leave, head re-election, isolation).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .core import Position


@dataclass(frozen=True)
class ClusterConfig:
    comm_radius: float = 2000.0        # R, m
    logistic_steepness: float = 0.01   # zeta, 1/m
    coverage_threshold: float = 0.9    # target max-coverage probability
    recluster_period: int = 50         # T_cls, slots
    reelect_threshold: int = 5         # t_ele, slots
    kmeans_max_iters: int = 100
    kmeans_tolerance: float = 1.0      # centroid shift, m
    isolation_floor: float = 1e-3      # below this coverage prob a member is isolated

    def __post_init__(self):
        if not 0 < self.coverage_threshold < 1:
            raise ValueError("coverage_threshold must lie in (0, 1)")
        if self.comm_radius <= 0 or self.logistic_steepness <= 0:
            raise ValueError("comm_radius and logistic_steepness must be positive")
        if self.recluster_period < 1 or self.reelect_threshold < 1:
            raise ValueError("recluster_period and reelect_threshold must be >= 1")


@dataclass
class Cluster:
    head: int
    members: set[int]          # includes the head
    centroid: Position


@dataclass
class ClusterState:
    clusters: list[Cluster] = field(default_factory=list)
    isolated: set[int] = field(default_factory=set)
    head_offcenter_counters: dict[int, int] = field(default_factory=dict)

    def head_of(self, uav: int) -> int | None:
        for c in self.clusters:
            if uav in c.members:
                return c.head
        return None

    def heads(self) -> list[int]:
        return [c.head for c in self.clusters]

    def all_members(self) -> set[int]:
        out: set[int] = set()
        for c in self.clusters:
            out |= c.members
        return out


@dataclass(frozen=True)
class MaintenanceEvent:
    kind: str        # head_broadcast | join_request | leave_notice | head_replaced | isolated
    subject: int     # sender / affected UAV
    target: int = -1  # head involved (new head for head_replaced)
    slot: int = 0


def coverage_probability(uav_pos: Position, head_pos: Position,
                         cfg: ClusterConfig) -> float:
    """Logistic coverage probability, decreasing with distance.

    1 / (1 + exp(zeta * (d - R))): 0.5 at the communication radius,
    approaching 1 when co-located.
    """
    d = uav_pos.distance_to(head_pos)
    arg = cfg.logistic_steepness * (d - cfg.comm_radius)
    if arg > 700:
        return 0.0
    return 1.0 / (1.0 + math.exp(arg))


def expected_cluster_size(member_positions, head_pos: Position,
                          cfg: ClusterConfig) -> float:
    """Sum of coverage probabilities over the given UAV positions."""
    if not member_positions:
        raise ValueError("need at least one UAV position")
    return sum(coverage_probability(p, head_pos, cfg) for p in member_positions)


def max_coverage_probability(uav_pos: Position, head_positions,
                             cfg: ClusterConfig) -> float:
    """1 - prod_l (1 - P_il): probability of being covered by any head."""
    if not head_positions:
        raise ValueError("need at least one head")
    miss = 1.0
    for hp in head_positions:
        miss *= 1.0 - coverage_probability(uav_pos, hp, cfg)
    return 1.0 - miss


def optimal_cluster_count(n_uavs: int, area: float, cfg: ClusterConfig) -> int:
    """Minimal cluster count reaching the coverage threshold under the
    uniform-density model: ceil(ln(1-P) / ln(1 - kappa*pi*R^2 / N))."""
    if n_uavs < 1:
        raise ValueError("n_uavs must be >= 1")
    kappa = n_uavs / area
    expected = kappa * math.pi * cfg.comm_radius ** 2
    if expected >= n_uavs:
        # one head already covers everything in expectation
        return 1
    c = math.ceil(math.log(1.0 - cfg.coverage_threshold)
                  / math.log(1.0 - expected / n_uavs))
    return min(max(c, 1), n_uavs)


def _nearest_member(member_ids, positions: dict[int, Position],
                    point: Position) -> int:
    """Member closest to a point; ties broken by lowest node id."""
    return min(member_ids,
               key=lambda i: (positions[i].distance_to(point), i))


def _centroid(member_ids, positions: dict[int, Position]) -> Position:
    xs = [positions[i].x for i in member_ids]
    ys = [positions[i].y for i in member_ids]
    zs = [positions[i].z for i in member_ids]
    n = len(member_ids)
    return Position(sum(xs) / n, sum(ys) / n, sum(zs) / n)


def kmeans_objective(assignment: dict[int, int], centroids: list[Position],
                     positions: dict[int, Position]) -> float:
    return sum(positions[i].distance_to(centroids[c])
               for i, c in assignment.items())


def kmeans_cluster(positions: dict[int, Position], k: int,
                   rng: np.random.Generator, cfg: ClusterConfig) -> ClusterState:
    """Position-based K-Means with farthest-point seeding.

    Lloyd iterations until the max centroid shift drops below the tolerance
    or the iteration cap. Each cluster's head is the member UAV nearest the
    final centroid (ties: lowest id). Empty clusters are reseeded at the
    point farthest from its assigned centroid.
    """
    ids = sorted(positions)
    if k > len(ids):
        raise ValueError(f"k={k} exceeds number of UAVs {len(ids)}")

    # farthest-point seeding from a seeded uniform start
    first = ids[int(rng.integers(len(ids)))]
    centroids = [positions[first]]
    while len(centroids) < k:
        far = max(ids, key=lambda i: (min(positions[i].distance_to(c)
                                          for c in centroids), -i))
        centroids.append(positions[far])

    assignment: dict[int, int] = {}
    for _ in range(cfg.kmeans_max_iters):
        for i in ids:
            assignment[i] = min(range(k),
                                key=lambda c: (positions[i].distance_to(centroids[c]), c))
        shift = 0.0
        new_centroids = list(centroids)
        for c in range(k):
            members = [i for i in ids if assignment[i] == c]
            if not members:
                # reseed at the point farthest from its own centroid
                far = max(ids, key=lambda i: (
                    positions[i].distance_to(centroids[assignment[i]]), -i))
                new_centroids[c] = positions[far]
                assignment[far] = c
                shift = float("inf")
                continue
            nc = _centroid(members, positions)
            shift = max(shift, nc.distance_to(centroids[c]))
            new_centroids[c] = nc
        centroids = new_centroids
        if shift < cfg.kmeans_tolerance:
            break
    # final reassignment so the result is a fixed point
    for i in ids:
        assignment[i] = min(range(k),
                            key=lambda c: (positions[i].distance_to(centroids[c]), c))

    state = ClusterState()
    for c in range(k):
        members = {i for i in ids if assignment[i] == c}
        if not members:
            continue
        centroid = _centroid(sorted(members), positions)
        head = _nearest_member(sorted(members), positions, centroid)
        state.clusters.append(Cluster(head=head, members=members, centroid=centroid))
    state.head_offcenter_counters = {c.head: 0 for c in state.clusters}
    return state


def maintenance_step(state: ClusterState, positions: dict[int, Position],
                     cfg: ClusterConfig, slot: int = 0
                     ) -> tuple[ClusterState, list[MaintenanceEvent]]:
    """One distributed maintenance slot.

    Members re-join the argmax-coverage head; members below the isolation
    floor for every head become isolated; isolated UAVs re-join when any
    head becomes reachable; an off-center head is replaced after t_ele
    consecutive off-center slots.
    """
    events: list[MaintenanceEvent] = []
    heads = state.heads()
    if not heads:
        return ClusterState(isolated=set(positions)), events
    head_pos = {h: positions[h] for h in heads}
    for h in heads:
        events.append(MaintenanceEvent("head_broadcast", h, slot=slot))

    new_members: dict[int, set[int]] = {h: {h} for h in heads}
    isolated: set[int] = set()
    old_head = {i: c.head for c in state.clusters for i in c.members}

    for i in sorted(positions):
        if i in heads:
            continue
        probs = {h: coverage_probability(positions[i], head_pos[h], cfg)
                 for h in heads}
        best = max(sorted(probs), key=lambda h: probs[h])
        if probs[best] < cfg.isolation_floor:
            isolated.add(i)
            if i not in state.isolated:
                events.append(MaintenanceEvent("isolated", i, slot=slot))
            continue
        prev = old_head.get(i)
        new_members[best].add(i)
        if prev != best:
            if prev is not None and prev in heads:
                events.append(MaintenanceEvent("leave_notice", i, prev, slot))
            events.append(MaintenanceEvent("join_request", i, best, slot))

    new_state = ClusterState(isolated=isolated)
    counters = dict(state.head_offcenter_counters)
    for h in heads:
        members = new_members[h]
        centroid = _centroid(sorted(members), positions)
        closest = _nearest_member(sorted(members), positions, centroid)
        count = counters.get(h, 0)
        if closest != h:
            count += 1
        else:
            count = 0
        if count >= cfg.reelect_threshold:
            events.append(MaintenanceEvent("head_replaced", h, closest, slot))
            new_state.clusters.append(Cluster(head=closest, members=members,
                                              centroid=centroid))
            new_state.head_offcenter_counters[closest] = 0
        else:
            new_state.clusters.append(Cluster(head=h, members=members,
                                              centroid=centroid))
            new_state.head_offcenter_counters[h] = count
    return new_state, events


def should_recluster(slot: int, cfg: ClusterConfig) -> bool:
    """True on every T_cls-th slot (including slot 0)."""
    if slot < 0:
        raise ValueError("slot must be >= 0")
    return slot % cfg.recluster_period == 0


def snapshot_lines(state: ClusterState, slot: int) -> list[str]:
    """Line-oriented cluster snapshot: slot, head id, member ids."""
    lines = []
    for c in sorted(state.clusters, key=lambda c: c.head):
        members = " ".join(str(m) for m in sorted(c.members))
        lines.append(f"{slot} {c.head} {members}")
    if state.isolated:
        iso = " ".join(str(m) for m in sorted(state.isolated))
        lines.append(f"{slot} -1 {iso}")
    return lines

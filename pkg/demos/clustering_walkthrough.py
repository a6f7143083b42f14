"""Dynamic UAV clustering from first principles: coverage probability, the
closed-form cluster count, K-Means head election, and the distributed
maintenance protocol reacting to drift.

Run: python3 demos/clustering_walkthrough.py
"""

import numpy as np

from sagin_sched.clustering import (ClusterConfig, coverage_probability,
                                    kmeans_cluster, maintenance_step,
                                    optimal_cluster_count)
from sagin_sched.core import Position


def main():
    cfg = ClusterConfig(comm_radius=500.0, coverage_threshold=0.9)

    print("coverage probability vs distance to head (R = 500 m):")
    head = Position(0, 0, 100)
    for d in (0.0, 250.0, 500.0, 750.0, 1000.0):
        p = coverage_probability(Position(d, 0, 100), head, cfg)
        print(f"  d = {d:6.0f} m  P = {p:.3f}")

    area = 1250.0 ** 2
    k = optimal_cluster_count(12, area, cfg)
    print(f"\n12 UAVs on a 1.25 km square, R = 500 m -> "
          f"optimal cluster count c* = {k}")

    rng = np.random.default_rng(0)
    positions = {i: Position(rng.uniform(0, 1250), rng.uniform(0, 1250), 100.0)
                 for i in range(12)}
    state = kmeans_cluster(positions, k, rng, cfg)
    print("\nK-Means result (head <- members):")
    for c in state.clusters:
        print(f"  head {c.head:2d} <- {sorted(c.members)}  "
              f"centroid ({c.centroid.x:6.0f}, {c.centroid.y:6.0f})")

    print("\ndrifting UAVs for 60 maintenance slots...")
    for slot in range(1, 61):
        for i in positions:
            positions[i] = Position(
                min(1250.0, max(0.0, positions[i].x + rng.normal(0, 20))),
                min(1250.0, max(0.0, positions[i].y + rng.normal(0, 20))),
                100.0)
        state, events = maintenance_step(state, positions, cfg, slot)
        for ev in events:
            if ev.kind == "head_broadcast":
                continue  # routine keepalive, not interesting here
            print(f"  slot {slot:3d}: {ev.kind} "
                  f"uav {ev.subject}" +
                  (f" -> {ev.target}" if ev.target is not None else ""))
    print("\nfinal clusters:")
    for c in state.clusters:
        print(f"  head {c.head:2d} <- {sorted(c.members)}")
    if state.isolated:
        print(f"  isolated: {sorted(state.isolated)}")


if __name__ == "__main__":
    main()

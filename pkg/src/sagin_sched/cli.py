"""Command-line experiment runner.

Exit codes: 0 success, 2 configuration error, 1 runtime failure.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

from . import harness

SCENARIO_ALIASES = {"balanced": "balanced", "delay": "delay_sensitive",
                    "compute": "compute_intensive"}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="sagin-sched",
        description="Cooperative SAGIN task-scheduling experiments")
    p.add_argument("--config", help="YAML config file")
    p.add_argument("--seed", type=int,
                   help="run seed (fallback: SAGIN_SCHED_SEED env var)")
    p.add_argument("--algo",
                   choices=["cmaddpg", "maddpg", "maac", "greedy", "random",
                            "local"])
    p.add_argument("--scenario", choices=sorted(SCENARIO_ALIASES))
    p.add_argument("--episodes", type=int)
    p.add_argument("--out", default="runs/out", help="output directory")
    p.add_argument("--desk", action="store_true",
                   help="desk-scale preset (12 UAVs, 6 BSs, 1.25 km side)")
    p.add_argument("--deterministic-channel", action="store_true",
                   help="disable shadowing draws")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    overrides: dict = {}
    if args.desk:
        overrides.update(harness.desk_overrides())
    if args.algo:
        overrides["algorithm"] = args.algo
    if args.scenario:
        overrides["scenario"] = SCENARIO_ALIASES[args.scenario]
    if args.episodes is not None:
        overrides["episodes"] = args.episodes
    if args.deterministic_channel:
        overrides["deterministic_channel"] = True
    seed = args.seed
    if seed is None and os.environ.get("SAGIN_SCHED_SEED"):
        seed = int(os.environ["SAGIN_SCHED_SEED"])
    if seed is not None:
        overrides["seeds"] = [seed]

    try:
        cfg = harness.load_config(args.config, overrides)
    except (ValueError, FileNotFoundError, KeyError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    try:
        summaries = harness.run_experiment(cfg, args.out)
    except Exception as exc:  # surfaced with run context
        print(f"run failed ({cfg.algorithm}, scenario {cfg.scenario}): {exc}",
              file=sys.stderr)
        return 1
    print(json.dumps(summaries, indent=2, sort_keys=True))
    return 0


if __name__ == "__main__":
    sys.exit(main())

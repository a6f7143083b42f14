"""Cooperative task scheduling in a space-air-ground integrated network:
link/delay models, dynamic UAV clustering, a clustered multi-agent
actor-critic offloading engine, baselines, and an experiment harness."""

from . import baselines, clustering, core, env, harness, marl, nn  # noqa: F401

__version__ = "0.1.0"

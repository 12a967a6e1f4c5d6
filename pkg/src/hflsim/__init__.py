"""Deterministic desk-scale simulator for UAV-assisted hierarchical
federated learning: channel/cost models, the three per-round solvers
(resource allocation, adaptive device selection, greedy redeployment), a
round orchestrator and a scenario CLI."""

__version__ = "0.1.0"

__all__ = [
    "netmodel",
    "costmodel",
    "learner",
    "p1_alm",
    "p2_td3",
    "p3_greedy",
    "orchestrator",
    "config",
    "cli",
]

"""Pursuit-evasion with costly, exposing state queries: simulator, learners,
baselines, metrics and a small-game equilibrium oracle."""

__version__ = "0.1.0"

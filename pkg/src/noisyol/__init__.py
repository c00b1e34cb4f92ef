"""Simulation and verification toolkit for online learning from noisy binary feedback."""

from .harness import ExperimentConfig, RegretSummary, build_config, replicate, run_episode, theoretical_bound
from .sim_core import ConfigError, Episodes, RegretTrace

__all__ = [
    "ConfigError",
    "Episodes",
    "ExperimentConfig",
    "RegretSummary",
    "RegretTrace",
    "build_config",
    "replicate",
    "run_episode",
    "theoretical_bound",
]
__version__ = "0.1.0"

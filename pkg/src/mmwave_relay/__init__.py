"""Cooperative AF relay beamforming with predictive relay selection in urban mmWave networks."""

from .beamforming import optimal_value, optimal_weights, sinr
from .channel import ChannelModel, ChannelParams
from .config import ConfigError, ExperimentConfig, bundled_config, load_config
from .harness import AggregateStats, TrialResult, export, run_experiment, run_trial
from .topology import NodeLocation, Topology, build_graph, build_topology, enumerate_paths, l1_distance

__version__ = "0.1.0"

__all__ = [
    "AggregateStats",
    "ChannelModel",
    "ChannelParams",
    "ConfigError",
    "ExperimentConfig",
    "NodeLocation",
    "Topology",
    "TrialResult",
    "build_graph",
    "build_topology",
    "bundled_config",
    "enumerate_paths",
    "export",
    "l1_distance",
    "load_config",
    "optimal_value",
    "optimal_weights",
    "run_experiment",
    "run_trial",
    "sinr",
]

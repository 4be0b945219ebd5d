"""Desk-scale personalized federated learning with contribution-weighted aggregation."""

from .config import ExperimentConfig, load_config
from .federation import AlgorithmKind, Federation, run_experiment

__version__ = "0.1.0"

__all__ = ["AlgorithmKind", "ExperimentConfig", "Federation", "load_config", "run_experiment"]

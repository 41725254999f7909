"""Experiment harness: configuration, references, runner and CLI."""

from .config import ConfigError, ExperimentConfig, load_config, parse_config
from .runner import RunResult, run_experiment

__all__ = ["ConfigError", "ExperimentConfig", "RunResult", "load_config", "parse_config", "run_experiment"]

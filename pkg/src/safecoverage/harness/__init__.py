"""Experiment configuration, execution, persistence and reporting."""
from .config import ConfigError, ExperimentConfig, config_from_dict, load_config
from .runner import run_one

__all__ = ["ConfigError", "ExperimentConfig", "config_from_dict", "load_config", "run_one"]

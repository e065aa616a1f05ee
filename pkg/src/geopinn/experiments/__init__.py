"""Configured runs of the four example problems."""
import importlib

from .config import EXPERIMENTS, ConfigError, ExperimentConfig, config_from_dict, default_config, load_config

_MODULES = {
    "eikonal": "eikonal",
    "poisson-sphere": "poisson",
    "stokes-tube": "stokes",
    "shape-opt": "shape",
}


def runner(experiment):
    if experiment not in _MODULES:
        raise ConfigError(f"unknown experiment {experiment!r}; valid: {', '.join(EXPERIMENTS)}")
    return importlib.import_module(f"{__name__}.{_MODULES[experiment]}").run


def run(cfg):
    """Run ``cfg.experiment`` and return its ExperimentReport."""
    return runner(cfg.experiment)(cfg)


__all__ = ["EXPERIMENTS", "ConfigError", "ExperimentConfig", "config_from_dict", "default_config",
           "load_config", "run", "runner"]

"""Exact solutions, experiment orchestration, reports and checks."""

from .analysis import discrete_energy, eoc
from .config import PRESETS, build_initial, build_metric, build_model, load_config, preset_config
from .exact import ConeCircle, ExactSolution, HyperbolicCircle, WulffEllipse
from .experiments import REFERENCE_ERRORS, run_config, run_convergence, run_showcase

__all__ = [
    "discrete_energy",
    "eoc",
    "PRESETS",
    "build_initial",
    "build_metric",
    "build_model",
    "load_config",
    "preset_config",
    "ExactSolution",
    "WulffEllipse",
    "ConeCircle",
    "HyperbolicCircle",
    "REFERENCE_ERRORS",
    "run_config",
    "run_convergence",
    "run_showcase",
]

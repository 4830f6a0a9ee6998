"""Saturated adaptive control that hands over to receding-horizon tracking.

Pipeline: a magnitude-saturated adaptive controller with a high-order
tuner learns the plant on ``[0, T_adap]``; the learned model then drives
a linear-quadratic tracking MPC, compared against a true-parameter oracle.
"""

from .config import ExperimentConfig, default_config_path, parse_config
from .errors import AdaptrackError
from .pipeline import RunReport, run_pipeline, sweep_delta

__all__ = [
    "AdaptrackError", "ExperimentConfig", "RunReport", "default_config_path",
    "parse_config", "run_pipeline", "sweep_delta",
]
__version__ = "0.1.0"

"""Trim and control allocation for a coaxial compound helicopter."""
from .core import (CONTROL_BOUNDS, CONTROL_NAMES, ControlVector, FlightCondition,
                   HelicopterConfig, default_config, load_config, validate_config)
from .trim import STRATEGIES, TrimSolution, build_problem, lm_solve, sweep

__version__ = "0.1.0"

__all__ = ["CONTROL_BOUNDS", "CONTROL_NAMES", "ControlVector", "FlightCondition",
           "HelicopterConfig", "STRATEGIES", "TrimSolution", "build_problem", "default_config",
           "load_config", "lm_solve", "sweep", "validate_config"]

"""Frequency control services from aggregates of thermostatically controlled loads.

Refrigerators and electric water heaters provide synthetic inertia and primary
frequency regulation on a single-bus model of the Sardinia-Corse grid.
"""
from .control import ControlMode, ControlParams
from .grid import EventSpec, GridConstants, UnitSpec, compute_grid_constants
from .metrics import MetricSummary, compute_gains, compute_metrics
from .scenario import (ConfigError, Scenario, SimulationPlan, load_scenario, run_matrix,
                       run_penetration_sweep, run_simulation)

__version__ = "0.1.0"

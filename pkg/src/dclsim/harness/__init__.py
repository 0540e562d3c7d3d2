"""Scenario simulation, method orchestration and metrics."""

from .metrics import MetricsEntry, MetricsReport, align_truth, build_report, compute_metrics, nees_bounds
from .run import LOG_HEADER, read_log, report_from_dir, run_scenario, run_trial, write_run
from .runners import MethodResult, RobotLog, run_ccl, run_dcl, run_method
from .scenario import (
    METHODS,
    ConfigError,
    ControlProgram,
    EstimatorConfig,
    Scenario,
    SensorConfig,
    default_scenario,
    load_scenario,
    scenario_from_dict,
    validate,
)
from .streams import Streams, generate_streams, mutual_visibility

__all__ = [
    "LOG_HEADER",
    "METHODS",
    "ConfigError",
    "ControlProgram",
    "EstimatorConfig",
    "MethodResult",
    "MetricsEntry",
    "MetricsReport",
    "RobotLog",
    "Scenario",
    "SensorConfig",
    "Streams",
    "align_truth",
    "build_report",
    "compute_metrics",
    "default_scenario",
    "generate_streams",
    "load_scenario",
    "mutual_visibility",
    "nees_bounds",
    "read_log",
    "report_from_dir",
    "run_ccl",
    "run_dcl",
    "run_method",
    "run_scenario",
    "run_trial",
    "scenario_from_dict",
    "validate",
    "write_run",
]

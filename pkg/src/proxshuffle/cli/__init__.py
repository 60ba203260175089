"""Configuration, experiment orchestration and the verification suite."""
from .config import ConfigError, ExperimentSpec, parse_config
from .experiment import ResultRow, SlopeRow, read_results, run_experiment, sweep_rate, write_results
from .main import main
from .verify import VerifyReport, verify_suite

__all__ = ["ConfigError", "ExperimentSpec", "ResultRow", "SlopeRow", "VerifyReport", "main",
           "parse_config", "read_results", "run_experiment", "sweep_rate", "verify_suite",
           "write_results"]

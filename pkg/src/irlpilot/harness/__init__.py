"""Experiment orchestration: configuration, trial runner, CLI."""

from .config import (
    ConfigError,
    CostConfig,
    ExperimentConfig,
    ObserverConfig,
    SimConfig,
    default_config,
    load_config,
)
from .runner import (
    MonteCarloResult,
    MonteCarloSummary,
    TrialRecord,
    resolve_threads,
    run_montecarlo,
    run_trial,
    write_metrics_csv,
    write_outputs,
    write_summary_csv,
    write_trajectory_csv,
)
from .cli import cli_main

__all__ = [
    "ConfigError",
    "CostConfig",
    "ExperimentConfig",
    "ObserverConfig",
    "SimConfig",
    "default_config",
    "load_config",
    "MonteCarloResult",
    "MonteCarloSummary",
    "TrialRecord",
    "resolve_threads",
    "run_montecarlo",
    "run_trial",
    "write_metrics_csv",
    "write_outputs",
    "write_summary_csv",
    "write_trajectory_csv",
    "cli_main",
]

"""Experiment driver: configuration, sweeps, fits, gap explorer, reports."""

from .config import ConfigError, ExperimentConfig
from .fit import FitResult, fit_modulus, fit_records
from .gaps import gap_explorer
from .report import emit_report
from .sweep import COLUMNS, run_stability_sweep

__all__ = [
    "COLUMNS",
    "ConfigError",
    "ExperimentConfig",
    "FitResult",
    "emit_report",
    "fit_modulus",
    "fit_records",
    "gap_explorer",
    "run_stability_sweep",
]

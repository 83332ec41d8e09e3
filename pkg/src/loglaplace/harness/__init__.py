"""Experiment configs, reports and the canned experiments behind the CLI."""

from .config import EXPERIMENTS, ExperimentConfig
from .experiments import (run_duality_check, run_moment_check, run_oracles,
                          run_rep_convergence, run_solve, run_wz_sweep)
from .report import Row, RunReport

__all__ = [
    "EXPERIMENTS", "ExperimentConfig", "Row", "RunReport", "run_duality_check",
    "run_moment_check", "run_oracles", "run_rep_convergence", "run_solve", "run_wz_sweep",
]

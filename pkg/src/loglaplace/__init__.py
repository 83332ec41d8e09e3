"""Numerical lab for a superprocess in a random environment and its
stochastic log-Laplace equation."""

from .errors import LogLaplaceError
from .grid import Field, Grid1D
from .lle_solver import SolverParams, Trajectory, solve_backward, solve_forward, solve_wz
from .model import parse_model
from .noise import BrownianPath, sample_path

__all__ = [
    "BrownianPath", "Field", "Grid1D", "LogLaplaceError", "SolverParams", "Trajectory",
    "parse_model", "sample_path", "solve_backward", "solve_forward", "solve_wz",
]

__version__ = "0.1.0"

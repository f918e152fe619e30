"""Multigrid with stiffness-based Braess-Sarazin relaxation for elliptic distributed control."""

from .discretization import UniformGrid, assemble_rhs, assemble_saddle, build_hierarchy, corner_problem
from .lfa import TwoGridConfig, optimal_smoothing, smoothing_factor, two_grid_factor
from .solver import BsrConfig, CycleConfig, MultigridSolver, measure_rho, solve_to_tol

__version__ = "0.1.0"

__all__ = [
    "UniformGrid", "assemble_rhs", "assemble_saddle", "build_hierarchy", "corner_problem",
    "TwoGridConfig", "optimal_smoothing", "smoothing_factor", "two_grid_factor",
    "BsrConfig", "CycleConfig", "MultigridSolver", "measure_rho", "solve_to_tol",
]

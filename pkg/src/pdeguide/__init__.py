"""Physics-guided diffusion sampling for Poisson, heat and Burgers equations."""

from __future__ import annotations

from .errors import (CFLError, ConfigError, ConvergenceError, DataError, FormatError, GridError,
                     GuidanceInstability, NonFiniteError, NumericError, PdeGuideError,
                     TrainingDivergence)
from .grid import (BoundarySpec, Dirichlet, Field, GridSpec, Initial, Neumann, Periodic,
                   SmoothingKernel, deriv_x, deriv_xx, deriv_y, gaussian_smooth, laplacian,
                   max_abs_error, project_boundary, relative_l2)
from .kernels import BACKEND
from .problems import (BurgersSpaceTime, HeatSpaceTime, Poisson, SineProfile, SinSinSource,
                       ZeroSource, analytic_solution, energy, make_problem, residual)
from .solvers import reference_solution, solve_burgers, solve_heat, solve_poisson

__version__ = "0.1.0"

__all__ = [
    "BACKEND", "BoundarySpec", "BurgersSpaceTime", "CFLError", "ConfigError", "ConvergenceError",
    "DataError", "Dirichlet", "Field", "FormatError", "GridError", "GridSpec", "GuidanceInstability",
    "HeatSpaceTime", "Initial", "Neumann", "NonFiniteError", "NumericError", "PdeGuideError",
    "Periodic", "Poisson", "SinSinSource", "SineProfile", "SmoothingKernel", "TrainingDivergence",
    "ZeroSource", "analytic_solution", "deriv_x", "deriv_xx", "deriv_y", "energy",
    "gaussian_smooth", "laplacian", "make_problem", "max_abs_error", "project_boundary",
    "reference_solution", "relative_l2", "residual", "solve_burgers", "solve_heat",
    "solve_poisson",
]

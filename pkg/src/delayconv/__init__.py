"""Numerical lab for linear retarded equations with diagonal operator coefficients:
fundamental solution by the method of steps, stochastic convolution under
Q-Wiener noise, and checks of the associated regularity estimates."""

from .config import ConfigError, RunConfig
from .fundamental import FundamentalSolution, SolverError, StepGrid, fit_estimate, solve_all, solve_mode
from .mild import InitialDatum, Trajectory, mild_solve, residual_check, structural_kernel
from .regularity import (
    ParameterMatrix,
    ReportBundle,
    calibrate_holder_estimator,
    estimate_path_holder,
    fit_moment_exponent,
    verify_dashboard,
)
from .report import FitReport
from .spectral import DelayKernel, DomainError, SpectralModel
from .stochastic import NoiseModel, PathEnsemble, exact_gaussian_sample, second_moment, simulate_paths

__version__ = "0.1.0"

__all__ = [
    "ConfigError", "DelayKernel", "DomainError", "FitReport", "FundamentalSolution", "InitialDatum",
    "NoiseModel", "ParameterMatrix", "PathEnsemble", "ReportBundle", "RunConfig", "SolverError",
    "SpectralModel", "StepGrid", "Trajectory", "calibrate_holder_estimator", "estimate_path_holder",
    "exact_gaussian_sample", "fit_estimate", "fit_moment_exponent", "mild_solve", "residual_check",
    "second_moment", "simulate_paths", "solve_all", "solve_mode", "structural_kernel", "verify_dashboard",
]

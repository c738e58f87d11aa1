"""Dynamical regularisation flows for linear ill-posed problems."""
from ._backend import NAME as backend
from .diagnostics import (
    DiagnosticsCurve,
    DiscrepancyNotReached,
    best_worst_case,
    discrepancy_stop,
    fit_rate,
    flow_trajectory,
    noise_free_curves,
    regularized_solution,
)
from .flow_filters import FilterKind, FlowFilter, make_filter
from .ode_oracle import integrate_flow, oracle_compare
from .problems import add_noise, diagonal_problem, integral_problem, load_problem, save_problem
from .rate_theory import RateFunction, StepRate, phi_transform
from .spectral_core import SpectralDecomposition, decompose, min_norm_solution, spectral_tail

__version__ = "0.1.0"

__all__ = [
    "backend", "DiagnosticsCurve", "DiscrepancyNotReached", "best_worst_case", "discrepancy_stop", "fit_rate",
    "flow_trajectory", "noise_free_curves", "regularized_solution", "FilterKind", "FlowFilter", "make_filter",
    "integrate_flow", "oracle_compare", "add_noise", "diagonal_problem", "integral_problem", "load_problem",
    "save_problem", "RateFunction", "StepRate", "phi_transform", "SpectralDecomposition", "decompose",
    "min_norm_solution", "spectral_tail",
]

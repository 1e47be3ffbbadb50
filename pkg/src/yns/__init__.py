"""Spectral laboratory for compressible Navier-Stokes with Yukawa-type coupling."""

__version__ = "0.1.0"

from .errors import YnsError
from .model import (
    Coefficients,
    DirectSlope,
    GammaLaw,
    PhysicalParams,
    Regime,
    classify_regime,
    derive_coefficients,
)
from .spectral import (
    Branch,
    GrowthSummary,
    ModeAnalysis,
    Propagator2x2,
    analyze_mode,
    max_growth,
    oscillation_factor,
    propagator,
    solenoidal_factor,
)
from .fields import FieldState, GridSpec, UnstableDataSpec, make_unstable_data
from .solver import RunRecord, Scheme, SolverConfig, run, step_linear, step_nonlinear

__all__ = [
    "__version__",
    "YnsError",
    "Coefficients", "DirectSlope", "GammaLaw", "PhysicalParams", "Regime",
    "classify_regime", "derive_coefficients",
    "Branch", "GrowthSummary", "ModeAnalysis", "Propagator2x2",
    "analyze_mode", "max_growth", "oscillation_factor", "propagator",
    "solenoidal_factor",
    "FieldState", "GridSpec", "UnstableDataSpec", "make_unstable_data",
    "RunRecord", "Scheme", "SolverConfig", "run", "step_linear", "step_nonlinear",
]

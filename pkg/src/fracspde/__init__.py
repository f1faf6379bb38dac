"""Spectral simulation of stochastic equations with a random fractional Laplacian."""

from .errors import ConfigError, FracSpdeError, PicardDivergenceError, SymbolDomainError, UnsupportedError
from .integrator import (
    CoefficientSet,
    SolutionPath,
    SolverConfig,
    evaluate_nonlinearity,
    picard_solve,
    solve_deterministic,
    solve_linear,
    stochastic_convolution_jump,
    stochastic_convolution_wiener,
)
from .levy import DriverPath, LevyMeasureSpec, LevyTriplet, sample_ensemble, sample_path
from .spectral import Field, FieldStack, Grid, MultiplierSymbol, SpectralField
from .verify import InequalityReport
from .whitenoise import WhiteNoiseConfig, solve_white_noise

__all__ = [
    "CoefficientSet",
    "ConfigError",
    "DriverPath",
    "Field",
    "FieldStack",
    "FracSpdeError",
    "Grid",
    "InequalityReport",
    "LevyMeasureSpec",
    "LevyTriplet",
    "MultiplierSymbol",
    "PicardDivergenceError",
    "SolutionPath",
    "SolverConfig",
    "SpectralField",
    "SymbolDomainError",
    "UnsupportedError",
    "WhiteNoiseConfig",
    "evaluate_nonlinearity",
    "picard_solve",
    "sample_ensemble",
    "sample_path",
    "solve_deterministic",
    "solve_linear",
    "solve_white_noise",
    "stochastic_convolution_jump",
    "stochastic_convolution_wiener",
]

__version__ = "0.1.0"

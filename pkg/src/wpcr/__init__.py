"""Wasserstein-based posterior contraction rates: kernels, rate formulas,
Poincare constants and a Monte Carlo harness."""

from .errors import (
    BelowThreshold,
    InvalidInput,
    InvalidParameter,
    InvalidSpec,
    NumericFailure,
    RunFailure,
    UnsupportedSpec,
    WpcrError,
)

__all__ = [
    "BelowThreshold",
    "InvalidInput",
    "InvalidParameter",
    "InvalidSpec",
    "NumericFailure",
    "RunFailure",
    "UnsupportedSpec",
    "WpcrError",
]
__version__ = "0.1.0"

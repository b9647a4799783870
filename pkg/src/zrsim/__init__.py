"""Monte Carlo simulation of asymmetric zero-range and exclusion processes with
second-class particles, plus the matching hydrodynamic limit formulas."""

from .core import (
    CONSTANT_RATE,
    INFINITE,
    AsymmetryParams,
    Configuration,
    RateFunction,
    SiteStack,
    ZRError,
    apply_jump,
    read_rate_file,
    translate,
    validate_rate,
)

__version__ = "0.1.0"

__all__ = [
    "CONSTANT_RATE",
    "INFINITE",
    "AsymmetryParams",
    "Configuration",
    "RateFunction",
    "SiteStack",
    "ZRError",
    "apply_jump",
    "read_rate_file",
    "translate",
    "validate_rate",
]

"""Return-map analysis of a three-dimensional slow-fast system with a saddle-focus."""
from __future__ import annotations

__version__ = "0.1.0"

from .core_system import Params, State, classify_equilibrium, find_equilibrium, hopf_scan, vector_field
from .errors import ConfigError, NumericalFailure, PredicateNotBracketed, SlowFastError

__all__ = [
    "__version__",
    "Params",
    "State",
    "classify_equilibrium",
    "find_equilibrium",
    "hopf_scan",
    "vector_field",
    "ConfigError",
    "NumericalFailure",
    "PredicateNotBracketed",
    "SlowFastError",
]

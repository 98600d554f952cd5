"""Optimal closing of a pairs position when trading is only intermittently allowed."""
from .closed_form import Solution, solve
from .model import REFERENCE_PARAMS, ModelParams, ValidationError, validate

__version__ = "0.1.0"

__all__ = ["ModelParams", "REFERENCE_PARAMS", "Solution", "ValidationError", "solve", "validate", "__version__"]

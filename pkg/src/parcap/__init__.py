"""Capacity potentials and initial-trace blow-up for u_t - Lap u + u^q = 0."""
from .model import ExponentContext, make_context, parse_set

__all__ = ["ExponentContext", "make_context", "parse_set"]
__version__ = "0.1.0"

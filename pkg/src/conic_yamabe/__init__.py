"""Numerical toolkit for the second-order Yamabe quotient expansion at conical points."""

from .bubble_core import ConeContext, make_context, sphere_volume, sphere_yamabe_constant

__all__ = ["ConeContext", "make_context", "sphere_volume", "sphere_yamabe_constant"]

__version__ = "0.1.0"

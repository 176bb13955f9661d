"""Numerics for the half-harmonic map flow from the line into the circle."""
from .nonlocal_ops import KERNEL_BACKEND

__all__ = ["KERNEL_BACKEND"]
__version__ = "0.1.0"

"""Numerics for the critical Choquard equation with a local perturbation."""

from .constants import ProblemParams, constants_report
from .radial import RadialField, RadialGrid, make_grid
from .riesz import KernelMatrix, build_kernel

__all__ = [
    "ProblemParams",
    "constants_report",
    "RadialField",
    "RadialGrid",
    "make_grid",
    "KernelMatrix",
    "build_kernel",
]

"""Numerical machinery for conformal k-Hessian equations: symmetric-function
cone algebra, gauge conversions, radial reduction, geometric diagnostics, and
Newton/continuation solvers for the radial model problems."""

__version__ = "0.1.0"

from . import analysis, conformal, radial, solver, symfunc  # noqa: F401

"""Sublinear primal-dual classifiers and game solvers with simulated quantum subroutines."""

__version__ = "0.1.0"

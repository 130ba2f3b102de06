"""Finite-difference tools for -Lap u = lambda c u + mu |grad u|^2 + h with Dirichlet data."""

__version__ = "0.1.0"

"""Numerical toolkit for improved and weighted one-dimensional Hardy inequalities."""

__version__ = "0.1.0"

"""Exact and empirical tools for metric Diophantine approximation with reduced fractions."""

__version__ = "0.1.0"

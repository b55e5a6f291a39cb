"""Optimal periodic harvesting of a light-limited photobioreactor."""

__version__ = "0.1.0"

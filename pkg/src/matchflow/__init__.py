"""Directed search design for two-sided continuum matching markets."""

__version__ = "0.1.0"

"""Numerical engine for multi-time quantum evolution."""

__version__ = "0.1.0"

"""Fundamental solutions of wave equations with oscillating time-dependent dissipation."""

__version__ = "0.1.0"

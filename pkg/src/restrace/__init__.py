"""Numerical checks of resonance trace formulas on exterior-ball models."""

__version__ = "0.1.0"

"""Bayesian graph-based multiple-instance learning."""

__version__ = "0.1.0"

"""Penalized minimax estimation and debiased inference for linear functionals."""

__version__ = "0.1.0"

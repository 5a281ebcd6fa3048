"""Tabular reinforcement learning with state partition functions."""

__version__ = "0.1.0"

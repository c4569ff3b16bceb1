"""Desk-scale numerical laboratory for the stochastic heat equation with colored noise."""

__version__ = "0.1.0"

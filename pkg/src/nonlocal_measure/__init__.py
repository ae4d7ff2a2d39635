"""Simulation of instantaneous verification measurements of nonlocal variables."""

__version__ = "0.1.0"

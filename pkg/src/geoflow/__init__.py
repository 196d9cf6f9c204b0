"""Parametric finite-element curvature flows with dual-multiplier time stepping."""

__version__ = "0.1.0"

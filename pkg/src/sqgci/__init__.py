"""Spectral toolkit and convex-integration iteration for stationary forced SQG on the 2-torus."""

__version__ = "0.1.0"

"""Numerical laboratory for sphere-valued harmonic maps on the 3-ball."""

__version__ = "0.1.0"

"""Simulation and spectral analysis of the discrete decay-fragmentation equation."""

__version__ = "0.1.0"

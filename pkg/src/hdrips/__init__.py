"""Simplex counts of random L-infinity Vietoris-Rips complexes over Poisson processes in high-dimensional cubes."""

__version__ = "0.1.0"

"""Boundary-integral laboratory for Neumann eigenfunctions of convex corner domains."""

__version__ = "0.1.0"

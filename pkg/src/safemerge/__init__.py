"""Chance-constrained CBF safety filter with adaptive alpha for ramp merging."""

__version__ = "0.1.0"

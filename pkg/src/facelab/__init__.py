"""Longitudinal face-metadata auditing, leakage-free subsetting, and
race-composite age estimation."""

__version__ = "0.1.0"

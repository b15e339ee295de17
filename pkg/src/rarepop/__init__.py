"""Bayesian mixture models for rare, clustered populations under adaptive cluster sampling."""

__version__ = "0.1.0"

"""Learned image compression back end with Gaussian-mixture entropy models."""

__version__ = "0.1.0"

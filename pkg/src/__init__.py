"""Logarithmic filter grouping for shallow convolutional networks."""

__version__ = "0.1.0"

"""Dynamically controlled decoherence of multiple multilevel quantum systems."""

__version__ = "0.1.0"

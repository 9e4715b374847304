"""Spectral laboratory for Gevrey smoothing in non-cutoff kinetic models."""

__version__ = "0.1.0"

"""Analytical speedup modeling for speculative decoding on Mixture-of-Experts models."""

__version__ = "0.1.0"

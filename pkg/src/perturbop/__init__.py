"""Spectral-radius expansions of perturbed composition operators."""

__version__ = "0.1.0"

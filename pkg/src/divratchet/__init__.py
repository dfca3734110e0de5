"""Optimal dividend ratcheting for a Brownian surplus: closed forms, finite-grid
threshold policies, the continuum free-boundary curve and a Monte Carlo oracle."""

from .model import ModelParams

__all__ = ["ModelParams"]
__version__ = "0.1.0"

"""Spectral and nonlinear stability toolkit for radiative shock profiles."""

__version__ = "0.1.0"

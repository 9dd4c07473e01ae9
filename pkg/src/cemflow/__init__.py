"""Multiscale CEM finite-element solver for convection-diffusion problems."""

__version__ = "0.1.0"

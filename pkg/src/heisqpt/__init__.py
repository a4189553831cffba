"""Trotter and compressed circuits for Heisenberg chains, noisy channel
simulation and process tomography."""

__version__ = "0.1.0"

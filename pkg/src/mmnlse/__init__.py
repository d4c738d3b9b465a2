"""Verifiable solvers for coupled multimode nonlinear Schrodinger equations."""

__version__ = "0.1.0"

"""Simulation toolkit for the critical random Dirac operator and the
Anderson Hamiltonian in its critical and top regimes."""

__version__ = "0.1.0"

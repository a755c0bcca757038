"""Finite-volume laboratory for adiabatic charge pumping in disordered lattices."""

__version__ = "0.1.0"

"""Isometric tensor network states on square lattices, simulated as channel circuits."""

__version__ = "0.1.0"

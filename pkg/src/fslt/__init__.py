"""Topological microwave-to-optical photon pumping in Fock-state lattices."""

__version__ = "0.1.0"

"""Anisotropic finite-horizon nonlocal gradients and thin-film energies."""

__version__ = "0.1.0"

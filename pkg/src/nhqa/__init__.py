"""Non-Hermitian quantum annealing of the transverse-field Ising chain."""

__all__ = ["__version__"]
__version__ = "0.1.0"

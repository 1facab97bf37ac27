"""Numerical verification of low-temperature exit laws for overdamped Langevin
dynamics through boundary Witten Laplacians."""

__version__ = "0.1.0"

"""Furstenberg entropy spectra: coset random walks on tree-like Schreier
graphs, Poisson-bundle entropy estimates, and SL(d, R) spectra from
Lyapunov exponents."""

__version__ = "0.1.0"

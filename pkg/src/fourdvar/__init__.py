"""Preconditioned 4D-Var with Gauss-Newton, line-search and regularised
Gauss-Newton outer loops, plus Lorenz twin-experiment tooling."""

__version__ = "0.1.0"

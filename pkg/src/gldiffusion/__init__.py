"""Interacting particles on the circle with a singular pair potential: Gibbs
sampling, hydrodynamic PDE, and Monte Carlo diagnostics of generator forms."""

__version__ = "0.1.0"

from .model import ModelParams, Psi, V, Vprime, scaling_error, wrap, wrap01  # noqa: E402
from .testfunctions import TestFunction  # noqa: E402

__all__ = ["ModelParams", "Psi", "V", "Vprime", "scaling_error", "wrap", "wrap01",
           "TestFunction", "__version__"]

"""Confidence intervals for Gaussian linear regression that exploit uncertain
prior information about a linear combination of the coefficients."""

__version__ = "0.1.0"

from ._backend import active_backend

__all__ = ["active_backend", "__version__"]

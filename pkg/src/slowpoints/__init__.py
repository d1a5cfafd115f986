"""Slow points of the stochastic heat equation near time zero.

Modules
-------
kernels     closed-form second moments of the linearized field
gaussfield  exact sampling of the field at a fixed site
spde        finite-difference solver with coupled linearization
exponent    small-ball survival and the boundary-crossing exponent
slowset     slow-point detection and box counting
harness     command line, configuration and artifacts
"""

from .errors import DomainError, InsufficientDataError, NumericalError

__version__ = "0.1.0"

__all__ = ["DomainError", "InsufficientDataError", "NumericalError", "__version__"]

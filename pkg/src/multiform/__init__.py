"""Phase-space Lagrangian one-forms for integrable and superintegrable systems."""
from . import expr, flows, legendre, liegroup, phase

__version__ = "0.1.0"

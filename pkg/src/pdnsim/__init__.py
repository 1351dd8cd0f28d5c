"""Deterministic simulator of a peer-assisted video delivery network."""

from .kernels import BACKEND
from .sim import Simulation

__version__ = "0.1.0"
__all__ = ["BACKEND", "Simulation", "__version__"]

"""Escaping-set dimension estimates for meromorphic functions given by poles."""
from ._backend import BACKEND

__version__ = "0.1.0"

__all__ = ["BACKEND", "__version__"]

"""Diffusive quantum trajectories for two-qubit entanglement dynamics."""

from __future__ import annotations

from . import channels, entanglement, linalg2q, unraveling
from ._kernels import HAVE_NUMBA, default_backend

__version__ = "0.1.0"

__all__ = [
    "HAVE_NUMBA",
    "channels",
    "default_backend",
    "entanglement",
    "linalg2q",
    "unraveling",
    "__version__",
]

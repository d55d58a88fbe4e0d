"""Exception types raised across the package."""

from __future__ import annotations


class TrajentError(Exception):
    """Base class for all package errors."""


class DegenerateConcurrence(TrajentError, ValueError):
    """Concurrence is too small for the phase c/C to be defined."""


class MaximalConcurrence(TrajentError, ValueError):
    """Concurrence is too close to 1 for the entropy derivatives to be finite."""


class NonLocalInput(TrajentError, ValueError):
    """A channel or correlation matrix violates the qubit-locality requirement."""


class EligibilityError(TrajentError, ValueError):
    """The protection unraveling was requested for a channel it cannot protect."""


class ChannelMismatch(TrajentError, ValueError):
    """An adaptive policy was paired with a channel it is not defined for."""


class UnphysicalUnraveling(TrajentError, ValueError):
    """The correlation matrix does not define a realizable measurement."""


class TrajectoryDiverged(TrajentError, RuntimeError):
    """A trajectory produced non-finite amplitudes.

    Attributes
    ----------
    indices : list of int
        Trajectory indices (within the ensemble) that failed.
    """

    def __init__(self, message: str, indices=()):
        super().__init__(message)
        self.indices = list(indices)

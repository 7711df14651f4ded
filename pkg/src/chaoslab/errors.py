"""Exception types raised across the package."""


class ChaosLabError(Exception):
    """Base class for all package errors."""


class DimensionError(ChaosLabError, ValueError):
    """Array or index dimensions do not agree."""


class UnsupportedNormError(ChaosLabError, ValueError):
    """An exact formula was requested for a norm where it does not hold."""


class SymmetryError(ChaosLabError, ValueError):
    """A symmetric coefficient table was required."""


class TetrahedralityError(ChaosLabError, ValueError):
    """A coefficient table with a repeated index where none is allowed."""


class MeanZeroError(ChaosLabError, ValueError):
    """Inverse of the generator applied to a functional with nonzero mean."""


class AccuracyError(ChaosLabError, RuntimeError):
    """A numerical routine could not certify its requested accuracy."""

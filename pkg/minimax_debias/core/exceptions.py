"""
Domain exceptions.

All of them are ValueErrors so the CLI treats them as bad input rather than
crashes.
"""


class EstimationError(ValueError):
    """Base class for failures of an estimation or oracle computation."""


class DimensionMismatchError(EstimationError):
    """A function or design was evaluated on data of the wrong shape."""


class SingularSystemError(EstimationError):
    """A linear system stayed singular after jitter was added."""


class IdentificationError(EstimationError):
    """The target is not (strongly) identified, or a correction is ill-defined."""


class OracleViolationError(EstimationError):
    """An exact population identity failed its numerical tolerance."""

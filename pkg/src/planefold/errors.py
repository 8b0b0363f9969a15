"""Exception taxonomy shared across the package."""

__all__ = [
    "PlanefoldError",
    "InvalidInputError",
    "GeneralPositionError",
    "NotAGraphError",
    "BoundaryError",
    "DivergenceError",
    "CertificationFailure",
    "JiggleError",
]


class PlanefoldError(Exception):
    """Base class for package errors."""


class InvalidInputError(PlanefoldError, ValueError):
    pass


class GeneralPositionError(PlanefoldError):
    """A construction met a degenerate (projection-singular) configuration."""


class NotAGraphError(PlanefoldError):
    """Two planes at principal angle pi/2 admit no graph presentation."""


class BoundaryError(PlanefoldError):
    """A finite-difference stencil or fiber left the declared domain."""


class DivergenceError(PlanefoldError):
    """A flow trajectory left the configured safety box."""


class CertificationFailure(PlanefoldError):
    """A verification failed; carries the machine-readable report."""

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report


class JiggleError(CertificationFailure):
    """Jiggling exhausted its iteration budget; report lists offenders."""

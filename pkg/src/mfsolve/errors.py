"""Exception types shared across the package."""


class MfsolveError(Exception):
    """Base class for package errors."""


class InvalidArgumentError(MfsolveError, ValueError):
    """An argument violates a documented precondition."""


class PointSetFormatError(MfsolveError, ValueError):
    """A point-set file is malformed or fails validation."""

    def __init__(self, message, line_number=None):
        super().__init__(message)
        self.line_number = line_number


class OverlapError(MfsolveError, ValueError):
    """Two particles overlap; carries a penetration-depth estimate."""

    def __init__(self, message, penetration=0.0):
        super().__init__(message)
        self.penetration = penetration


class PlacementError(MfsolveError, RuntimeError):
    """Cluster growth failed to place a particle."""


class SingularPairError(MfsolveError, ValueError):
    """A kernel was evaluated at coincident source/target points."""

    def __init__(self, message, target_index=None, source_index=None):
        super().__init__(message)
        self.target_index = target_index
        self.source_index = source_index


class DegenerateGeometryError(MfsolveError, ValueError):
    """A geometric configuration makes an operator singular."""


class NumericalError(MfsolveError, RuntimeError):
    """A numerical routine (SVD, Newton iteration) failed to converge."""


class DomainError(MfsolveError, ValueError):
    """An evaluation point lies outside the solver's valid domain."""

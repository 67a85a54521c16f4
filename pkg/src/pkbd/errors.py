"""Exception and warning types shared across the package."""


class PkbdError(Exception):
    """Base class for all package errors."""


class InvalidDimension(PkbdError, ValueError):
    pass


class InvalidParameter(PkbdError, ValueError):
    pass


class DimensionMismatch(PkbdError, ValueError):
    pass


class ZeroVector(PkbdError, ValueError):
    """Raised when a row cannot be projected onto the sphere."""

    def __init__(self, message="vector has zero norm", rows=None):
        super().__init__(message)
        self.rows = list(rows) if rows is not None else []


class EfficiencyTooLow(PkbdError, RuntimeError):
    """Rejection sampling would need an unreasonable number of proposals."""


class TooManyClusters(PkbdError, ValueError):
    pass


class DegenerateResultant(PkbdError, ArithmeticError):
    pass


class NonFiniteUpdate(PkbdError, ArithmeticError):
    pass


class AllRunsDegenerate(PkbdError, RuntimeError):
    pass


class NoiseComponentUnsupported(PkbdError, ValueError):
    pass


class TooFewEntries(PkbdError, ValueError):
    pass


class LengthMismatch(PkbdError, ValueError):
    pass


class ClampWarning(UserWarning):
    """A concentration parameter was pushed back inside its open interval."""


class NoElbowWarning(UserWarning):
    """The elbow rule found no elbow; the largest candidate was returned."""


class DegeneratePartitionWarning(UserWarning):
    """ARI is undefined for the given pair of trivial partitions."""

"""Exception types shared across the package."""


class OmpSupportError(Exception):
    """Base class for all errors raised by this package."""


class InputDomainError(OmpSupportError, ValueError):
    """An argument lies outside the operation's domain."""


class DegenerateSystemError(OmpSupportError, ArithmeticError):
    """A column submatrix is (numerically) rank deficient.

    ``partial`` optionally carries whatever was computed before the failure,
    e.g. the iterations of an OMP run completed so far.
    """

    def __init__(self, message, partial=None):
        super().__init__(message)
        self.partial = partial


class CapacityError(OmpSupportError):
    """Exhaustive enumeration would exceed the configured cap."""

    def __init__(self, message, cap):
        super().__init__(message)
        self.cap = cap


class HypothesisViolatedError(OmpSupportError, ValueError):
    """A threshold formula was evaluated outside its standing assumption."""


class ConsistencyError(OmpSupportError):
    """A stored trace does not match the instance it claims to describe."""

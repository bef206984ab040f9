"""Exception types raised by idlewatch."""


class NumericalFailure(RuntimeError):
    """A numerical routine (quadrature, eigensolver, rooting) did not produce a usable result."""


class AlarmPendingError(RuntimeError):
    """Raised when a latched detector is updated again without a reset."""

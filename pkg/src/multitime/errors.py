"""Exception types shared across the package."""


class InvalidInputError(ValueError):
    """Argument outside an operation's domain (bad step, non-finite entries, ...)."""


class ShapeError(ValueError):
    """Operands with incompatible dimensions."""


class InconsistentInputError(ValueError):
    """Input fails the premises an operation needs (e.g. a genuine pair interaction)."""


class IntegratorFailure(RuntimeError):
    """Time stepping went unstable."""


class BoundaryContactError(RuntimeError):
    """A light cone reached the edge of a zero-padded grid."""


class ConsistencyAssertionError(AssertionError):
    """An internal invariant of the multi-time construction was violated."""

"""Exception hierarchy shared by all quadgrad modules."""


class QuadgradError(Exception):
    """Base class for every error raised by the package."""


class GridMismatchError(QuadgradError, ValueError):
    """Array shapes do not match the grid they are used with."""


class InputError(QuadgradError, ValueError):
    """Invalid data (nonpositive gauge, vanishing weight, assumption (A) violated...)."""


class DomainError(QuadgradError, ValueError):
    """A nodal value falls outside the domain of a transform or nonlinearity."""

    def __init__(self, message, node=None):
        super().__init__(message)
        self.node = node


class TransformRangeError(QuadgradError, OverflowError):
    """exp(mu*u) would overflow at some node."""

    def __init__(self, message, node=None):
        super().__init__(message)
        self.node = node


class SingularOperatorError(QuadgradError, ArithmeticError):
    """A sparse factorization met a zero (or tiny) pivot."""

    def __init__(self, message, pivot=None):
        super().__init__(message)
        self.pivot = pivot


class DefinitenessError(QuadgradError, ArithmeticError):
    """A shifted operator expected to be positive definite is not."""


class ConvergenceError(QuadgradError, RuntimeError):
    """An iteration did not converge; carries the last residual."""

    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


class CertificateError(QuadgradError, ValueError):
    """A lower/upper solution failed its nodewise verification."""

    def __init__(self, message, node=None, violation=None):
        super().__init__(message)
        self.node = node
        self.violation = violation


class UnboundedOrbitError(QuadgradError, ValueError):
    """A phase-plane orbit has no turning point at the requested energy."""


class ClassificationError(QuadgradError, ValueError):
    """Phase-plane parameters do not fall in the regime an operation needs."""

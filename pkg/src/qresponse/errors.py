"""Exception and warning classes.

Errors are split in two families so the command line front end can map them
onto exit codes: bad input (``ValidationError``) and numerical trouble
(``NumericalFailure``).
"""


class QResponseError(Exception):
    """Base class for all errors raised by the package."""


class ConfigParse(QResponseError):
    """A configuration file could not be read or decoded."""


class ValidationError(QResponseError, ValueError):
    """Input violates a documented precondition.

    ``path`` optionally names the offending configuration key.
    """

    def __init__(self, message: str, path: str | None = None):
        super().__init__(message)
        self.path = path


class NumericalFailure(QResponseError, ArithmeticError):
    """A computation could not be completed to the requested accuracy."""


# input errors
class NonHermitianInput(ValidationError):
    pass


class DomainError(ValidationError):
    pass


class UnknownFunctionTag(ValidationError):
    pass


class NegativeWeight(ValidationError):
    pass


class DimensionMismatch(ValidationError):
    pass


class IndexOutOfRange(ValidationError, IndexError):
    pass


class DimensionTooLarge(ValidationError):
    pass


class NonCommutingNumber(ValidationError):
    pass


class MissingCouplingTable(ValidationError):
    pass


class GridMismatch(ValidationError):
    pass


class NotTimeReversalSymmetric(ValidationError):
    pass


class NonUniformGrid(ValidationError):
    pass


class OnRealAxis(ValidationError):
    pass


class OverdampedUnsupported(ValidationError):
    pass


# numerical errors
class ConvergenceFailure(NumericalFailure):
    pass


class SingularJacobian(NumericalFailure):
    pass


class StepTooCoarse(NumericalFailure):
    pass


class PoleHit(NumericalFailure):
    pass


class EdgeLeakage(UserWarning):
    """Grid values do not decay toward the edges; truncation error likely."""

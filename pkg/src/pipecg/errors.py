"""Exception types shared across the package."""


class PipecgError(Exception):
    """Base class for all package errors."""


class DimensionMismatchError(PipecgError):
    """Operands have incompatible shapes."""


class MatrixFormatError(PipecgError):
    """A matrix violates the CSR storage invariants."""


class NotSymmetricError(MatrixFormatError):
    """Numeric or structural symmetry is missing; solvers require SPD input."""


class DefinitenessError(PipecgError):
    """A quantity that must be positive for SPD systems came out nonpositive."""


class NumericError(PipecgError):
    """A recurrence produced a non-finite value."""

    def __init__(self, message, iteration=None):
        super().__init__(message)
        self.iteration = iteration


class ParseError(PipecgError):
    """Malformed input file; carries a line number when known."""

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class BreakdownSignal(PipecgError):
    """Square-root or LU breakdown in the pipelined Gram/tridiagonal updates.

    Carries the offending root argument (or divisor) so restart handlers and
    tests can inspect how singular the update was.
    """

    def __init__(self, message, root_argument=None):
        super().__init__(message)
        self.root_argument = root_argument

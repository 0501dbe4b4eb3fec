"""Exception hierarchy shared by every module of the toolkit."""


class NnoplsError(Exception):
    """Base class for all toolkit errors."""


class InputError(NnoplsError, ValueError):
    """Malformed or out-of-contract input data (CLI exit code 2)."""


class InvalidLabelError(InputError):
    def __init__(self, index, label, n_classes):
        self.index = index
        self.label = label
        super().__init__(
            f"label {label!r} at index {index} is outside [0, {n_classes})"
        )


class InsufficientSamplesError(InputError):
    pass


class DimensionMismatchError(InputError):
    pass


class PreconditionError(InputError):
    pass


class ConfigurationError(InputError):
    pass


class PreprocessingError(InputError):
    pass


class BankFormatError(InputError):
    """Raised when a bank file cannot be parsed; carries line/field context."""

    def __init__(self, message, line=None, field=None):
        self.line = line
        self.field = field
        where = []
        if line is not None:
            where.append(f"line {line}")
        if field is not None:
            where.append(f"field {field!r}")
        prefix = f"[{', '.join(where)}] " if where else ""
        super().__init__(prefix + message)


class InvariantViolationError(InputError):
    pass


class NumericalError(NnoplsError, ArithmeticError):
    """Numerical failure inside a solver (CLI exit code 3)."""


class NnlsConvergenceError(NumericalError):
    def __init__(self, message, best_x=None, iterations=None):
        self.best_x = best_x
        self.iterations = iterations
        super().__init__(message)


class DegenerateProjectionError(NumericalError):
    pass


class DeflationExhausted(NumericalError):
    """The cross-covariance has no component left along the probe direction."""

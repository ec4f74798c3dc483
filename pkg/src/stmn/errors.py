"""Exception hierarchy shared by every stmn module."""


class StmnError(Exception):
    """Base class for all errors raised by this package."""


class InputError(StmnError, ValueError):
    """Bad shapes, non-finite entries or out-of-range arguments."""


class SingularMatrixError(StmnError, ArithmeticError):
    """A linear system had no unique solution and no ridge was allowed."""


class NumericError(StmnError, FloatingPointError):
    """A computation produced non-finite values."""


class ManifoldUnavailable(StmnError, LookupError):
    """Too few same-class samples to build a local neighborhood."""


class TrainingDiverged(StmnError, RuntimeError):
    """Training hit a non-finite loss; ``history`` holds the records so far."""

    def __init__(self, message, history=None, record=None):
        super().__init__(message)
        self.history = history
        self.record = record


class ConfigError(StmnError, ValueError):
    """An experiment config failed validation."""

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)

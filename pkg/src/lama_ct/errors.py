"""Exception hierarchy shared by the library and the CLI exit codes."""


class LamaError(Exception):
    """Base class for all package errors."""


class ConfigError(LamaError, ValueError):
    """A configuration value is out of range or inconsistent."""


class NumericalFailure(LamaError, ArithmeticError):
    """The solver produced a non-finite objective or gradient."""


class LineSearchFailure(NumericalFailure):
    """Backtracking exhausted ``max_backtracks`` without sufficient decrease.

    Carries the partial trace so the caller can inspect what happened.
    """

    def __init__(self, message, trace=None):
        super().__init__(message)
        self.trace = list(trace or [])

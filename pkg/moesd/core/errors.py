"""Exception hierarchy shared by the modeling library and the CLI."""

from typing import Optional


class MoesdError(Exception):
    """Base class for every error raised by moesd."""


class ModelDomainError(MoesdError, ValueError):
    """An input lies outside the domain of a model formula."""


class CalibrationInputError(ModelDomainError):
    """Fit preconditions are not met (too few measurements, bad bounds...)."""


class ConfigError(MoesdError):
    """Malformed configuration, profile or measurement file."""

    def __init__(self, message: str, path: Optional[str] = None, line: Optional[int] = None):
        self.path = path
        self.line = line
        if path is not None and line is not None:
            message = f"{path}:{line}: {message}"
        elif path is not None:
            message = f"{path}: {message}"
        super().__init__(message)


class MeasurementFileError(ConfigError):
    """A measurement CSV row failed validation."""


class FitNotConvergedError(MoesdError):
    """The solver stopped before meeting its tolerances.

    Only raised when a strict fit is requested; `result` holds the best
    parameters found so far.
    """

    def __init__(self, message: str, result=None):
        super().__init__(message)
        self.result = result

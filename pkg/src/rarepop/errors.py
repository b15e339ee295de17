"""Exception types shared across the package."""


class RarepopError(Exception):
    """Base class for all package errors."""


class DomainError(RarepopError, ValueError):
    """An argument lies outside the support or parameter space of an operation."""


class ParseError(RarepopError, ValueError):
    """A data file could not be parsed."""

    def __init__(self, message, path=None, line=None):
        self.path = path
        self.line = line
        where = ""
        if path is not None:
            where = f"{path}"
            if line is not None:
                where += f":{line}"
            where += ": "
        super().__init__(where + message)


class GenerationError(RarepopError, RuntimeError):
    """Synthetic population generation failed to satisfy a constraint."""


class ConfigError(RarepopError, ValueError):
    """A run configuration is missing fields or holds invalid values."""


class InsufficientDrawsError(RarepopError, ValueError):
    """A diagnostic needs more draws than the series provides."""

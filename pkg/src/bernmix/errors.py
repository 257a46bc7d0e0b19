"""Exception types shared across the package."""


class BernmixError(Exception):
    """Base class for all package errors."""


class ParseError(BernmixError, ValueError):
    """A transaction or model file could not be parsed."""

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class ContractViolation(BernmixError):
    """A numeric invariant or interface contract was broken."""


class ModelFormatError(BernmixError, ValueError):
    """A serialized model is malformed, of the wrong version, or invalid."""

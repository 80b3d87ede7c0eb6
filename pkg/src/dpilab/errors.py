"""Exception types shared across the package."""


class ShapeError(ValueError):
    """Operand shapes are incompatible with the requested operation."""


class DomainError(ValueError):
    """A scalar argument lies outside its admissible domain."""


class UsageError(RuntimeError):
    """An API was called in a state or mode that does not support it."""


class ConfigError(ValueError):
    """Invalid or inconsistent run configuration."""


class FormatError(ValueError):
    """A serialized artifact is malformed (bad magic, version, CRC, truncation)."""


class NumericAbort(RuntimeError):
    """Training hit a non-finite loss; carries a diagnostic snapshot."""

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}

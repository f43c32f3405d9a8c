"""Exception taxonomy shared across the package.

The CLI maps these onto process exit codes: ConfigError and CorruptionError
are usage errors (exit 2), ParseError / IdRangeError / ShapeError / GraphError
and plain OSError are input errors (exit 3), NumericError is a numeric
failure (exit 4).
"""


class GgdError(Exception):
    """Base class for all package errors."""


class ConfigError(GgdError):
    """Invalid configuration value, unknown key, or inconsistent flags."""


class ParseError(GgdError):
    """Malformed input file. Carries a line number when one makes sense."""

    def __init__(self, message: str, line: int | None = None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class IdRangeError(GgdError):
    """Node or class id outside the representable / declared range."""


class ShapeError(GgdError):
    """Dimension mismatch between arrays, files, or checkpoints."""


class GraphError(GgdError):
    """CSR invariant violation or impossible graph operation."""


class CorruptionError(GgdError):
    """Corruption is undefined, e.g. shuffling fewer than two rows."""


class NumericError(GgdError):
    """Non-finite value where the training contract requires finiteness."""

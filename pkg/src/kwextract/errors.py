"""Exception hierarchy shared by every kwextract module."""


class KwExtractError(Exception):
    """Base class for all package errors."""


class DimensionError(KwExtractError, ValueError):
    """Operand shapes do not conform."""


class ParameterError(KwExtractError, ValueError):
    """An argument is outside its valid range (e.g. a non-positive temperature)."""


class NormalizationError(KwExtractError, ValueError):
    """A vector with zero norm was passed to a normalizer."""


class NumericError(KwExtractError, FloatingPointError):
    """A NaN or infinity was produced or consumed."""


class ValidationError(KwExtractError, ValueError):
    """Input data violates a documented precondition."""


class ConfigError(KwExtractError, ValueError):
    """A configuration value or key is invalid."""


class ParseError(KwExtractError, ValueError):
    """A text file could not be parsed; carries the offending line number."""

    def __init__(self, message, line=None, path=None):
        self.line = line
        self.path = path
        where = ""
        if path is not None:
            where += f"{path}"
        if line is not None:
            where += f":{line}" if where else f"line {line}"
        super().__init__(f"{where}: {message}" if where else message)


class FormatError(KwExtractError, ValueError):
    """A file is well formed but incompatible (wrong dimension, wrong version)."""


class ExtractionError(KwExtractError, ValueError):
    """A keyword could not be extracted from the given answer."""


class TrainingError(KwExtractError, RuntimeError):
    """Training was aborted, typically because the loss became non-finite."""

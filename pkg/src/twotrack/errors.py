"""Exception types shared across the package."""


class TwoTrackError(Exception):
    """Base class for package errors."""


class DimensionError(TwoTrackError, ValueError):
    pass


class RangeError(TwoTrackError, ValueError):
    pass


class NumericError(TwoTrackError, ArithmeticError):
    pass


class InputError(TwoTrackError, ValueError):
    pass


class CodecError(TwoTrackError, ValueError):
    pass


class TrainingError(TwoTrackError, RuntimeError):
    pass


class MalformedPatternError(TwoTrackError, ValueError):
    pass


class AlignmentError(TwoTrackError, ValueError):
    pass


class VocabularyError(TwoTrackError, IndexError):
    pass


class ConfigError(TwoTrackError, ValueError):
    pass


class CapacityError(TwoTrackError, ValueError):
    pass


class PlanError(TwoTrackError, RuntimeError):
    pass


class DataError(TwoTrackError, ValueError):
    pass


class ParseError(DataError):
    """Malformed file content; ``line`` is 1-based when known."""

    def __init__(self, message, line=None, field=None):
        self.line = line
        self.field = field
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)

"""
Exception hierarchy shared by the detections, evaluation and simulation apps.
"""


class DetmatchError(Exception):
    """Base class for every error raised by the toolkit."""


class DegenerateBoxError(DetmatchError, ValueError):
    """A box with negative width or height was constructed or derived."""

    def __init__(self, message, index=None):
        super().__init__(message)
        self.index = index


class DatasetFormatError(DetmatchError):
    """
    A groups or detections document failed validation.
    `location` names the offending record (index and id when known).
    """

    def __init__(self, message, location=None):
        if location:
            message = f"{location}: {message}"
        super().__init__(message)
        self.location = location


class SchemaMismatchError(DetmatchError, ValueError):
    """Extras arity differs between inputs that must share a schema."""


class KinkPointError(DetmatchError):
    """A gradient was requested at a non-differentiable configuration."""


class ConfigError(DetmatchError, ValueError):
    """A simulator configuration is malformed."""


class InfeasibleConfigError(ConfigError):
    """A simulator configuration asks for statistics the generator cannot realize."""


class MetricInvariantError(DetmatchError):
    """A metric range invariant was violated (a bug, not a data problem)."""


class EmptyDatasetError(DetmatchError, ValueError):
    """An analysis needs records the input does not contain."""

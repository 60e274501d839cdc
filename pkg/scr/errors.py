"""
Exception hierarchy shared by every stage of the pipeline.

The CLI maps these onto exit codes: ConfigError -> 1, DataError -> 2,
NumericError -> 3.
"""


class ScrError(Exception):
    """Base class for all pipeline errors."""


class ShapeError(ScrError, ValueError):
    """Array dimensions do not line up."""


class DomainError(ScrError, ValueError):
    """A value lies outside the domain of a function (negative probability, NaN input)."""


class ConfigError(ScrError, ValueError):
    """Invalid configuration or command-line usage."""


class DataError(ScrError):
    """Malformed or inconsistent input data."""


class NumericError(ScrError, ArithmeticError):
    """Non-finite values or a violated numeric invariant during training."""


class TrainingDiverged(NumericError):
    """Raised when the loss stops being finite.

    `last_good` holds a copy of the model from the last finite step so the
    caller can still checkpoint it.
    """

    def __init__(self, message: str, last_good=None, step: int = 0):
        super().__init__(message)
        self.last_good = last_good
        self.step = step

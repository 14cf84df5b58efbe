"""Exception hierarchy.

Every error carries an ``exit_code`` so the command line can map error
classes to distinct process exit statuses.
"""

from __future__ import annotations


class ClimrankError(Exception):
    exit_code = 1


class ConfigurationError(ClimrankError, ValueError):
    exit_code = 2


class TransportError(ClimrankError):
    """HTTP failure that survived the retry budget."""

    exit_code = 3

    def __init__(self, message: str, status: int | None = None, retries: int = 0):
        super().__init__(message)
        self.status = status
        self.retries = retries


class DecodeError(ClimrankError, ValueError):
    exit_code = 4

    def __init__(self, message: str, record_id: str | None = None):
        super().__init__(message)
        self.record_id = record_id


class AbstractError(ClimrankError, ValueError):
    exit_code = 5


class PositionConflictError(AbstractError):
    pass


class EmptyAbstractError(AbstractError):
    pass


class CorpusError(ClimrankError, ValueError):
    exit_code = 6


class LoadError(CorpusError):
    def __init__(self, message: str, line: int | None = None):
        super().__init__(message if line is None else f"line {line}: {message}")
        self.line = line


class SampleSizeError(CorpusError):
    pass


class DuplicateIdError(CorpusError):
    pass


class ParseError(ClimrankError, ValueError):
    """A model response could not be turned into a score vector."""

    exit_code = 7

    def __init__(self, message: str, key: str | None = None):
        super().__init__(message)
        self.key = key


class ScoreRangeError(ParseError):
    pass


class ProviderError(ClimrankError):
    exit_code = 8


class BatchError(ClimrankError):
    """Too many (work, run) evaluations failed for the batch to be usable."""

    exit_code = 9

    def __init__(self, message: str, failures=None, dataset=None):
        super().__init__(message)
        self.failures = list(failures or [])
        self.dataset = dataset


class ValidationError(ClimrankError, ValueError):
    exit_code = 10

    def __init__(self, message: str, row: int | None = None):
        super().__init__(message if row is None else f"row {row}: {message}")
        self.row = row


class AlignmentError(ClimrankError, ValueError):
    exit_code = 11


class SchemaError(ClimrankError, ValueError):
    exit_code = 12


class DegenerateLabelsError(ClimrankError, ValueError):
    exit_code = 13


class NormalizationError(ClimrankError, ArithmeticError):
    exit_code = 14


class ConvergenceError(ClimrankError, ArithmeticError):
    exit_code = 15

    def __init__(self, message: str, last_iterate=None, iterations: int = 0, grad_norm: float = float("nan")):
        super().__init__(message)
        self.last_iterate = last_iterate
        self.iterations = iterations
        self.grad_norm = grad_norm

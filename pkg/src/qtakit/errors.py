"""Exception hierarchy shared across the toolkit.

The CLI maps these onto its stable exit codes (usage=2, parse=3,
numeric=4, missing artifact=5).
"""


class QtakitError(Exception):
    """Base class for all toolkit errors."""


class ValidationError(QtakitError, ValueError):
    """An input violates a documented precondition or invariant."""


class ParseError(QtakitError, ValueError):
    """A source file does not conform to its grammar.

    Carries ``line`` (1-based) and optionally ``column`` when known.
    """

    def __init__(self, message, line=None, column=None):
        loc = ""
        if line is not None:
            loc = f" (line {line})" if column is None else f" (line {line}, col {column})"
        super().__init__(message + loc)
        self.line = line
        self.column = column


class NumericError(QtakitError, ArithmeticError):
    """A numeric routine hit a degenerate or non-finite state."""


class TrainingDivergedError(NumericError):
    """Training loss became non-finite; ``epoch`` records where."""

    def __init__(self, message, epoch):
        super().__init__(f"{message} (epoch {epoch})")
        self.epoch = epoch


class MissingArtifactError(QtakitError, FileNotFoundError):
    """A pipeline stage requires an artifact that is not present."""

"""Exception hierarchy shared across the pipeline.

Each class carries the CLI exit code used when it escapes a subcommand.
"""


class LcsBenchError(Exception):
    exit_code = 1


class ConfigError(LcsBenchError, ValueError):
    exit_code = 2


class MissingInputError(LcsBenchError, FileNotFoundError):
    exit_code = 3


class TrainingDivergedError(LcsBenchError, ArithmeticError):
    exit_code = 4


class NumericError(LcsBenchError, ArithmeticError):
    exit_code = 4


class GrammarError(LcsBenchError, ValueError):
    """A series key or column name violates the column grammar."""

    exit_code = 5


class ParseError(LcsBenchError, ValueError):
    exit_code = 5


class IntegrityError(LcsBenchError, ValueError):
    exit_code = 5


class MalformedInputError(LcsBenchError, ValueError):
    exit_code = 5

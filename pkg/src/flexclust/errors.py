"""Exception hierarchy shared by the pipeline stages.

The CLI maps each family onto an exit code: configuration problems exit 2,
bad data exits 3, broken internal invariants exit 4.
"""


class FlexclustError(Exception):
    exit_code = 1


class ConfigError(FlexclustError, ValueError):
    exit_code = 2


class DataError(FlexclustError, ValueError):
    exit_code = 3


class ReadingFormatError(DataError):
    """Record has the wrong number of columns."""


class ReadingParseError(DataError):
    """Timestamp field is not a valid ``YYYY-MM-DDTHH:MM:SS`` date-time."""


class ReadingValidationError(DataError):
    """Power field is non-numeric, non-finite or negative, or the id is empty."""


class ContractError(FlexclustError, ValueError):
    """A function was called with arguments violating its precondition."""

    exit_code = 4


class InvariantError(FlexclustError, RuntimeError):
    exit_code = 4

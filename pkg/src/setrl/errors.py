"""Library-wide error types.

Every error carries a stable machine-readable ``code`` so callers (and the
CLI) can react without string-matching messages.
"""

from __future__ import annotations


class SetRLError(Exception):
    """Base class; ``code`` identifies the failure class."""

    code = "SETRL_ERROR"

    def __init__(self, message: str = ""):
        super().__init__(message or self.code)


class LengthMismatchError(SetRLError):
    code = "LENGTH_MISMATCH"


class EmptyBatchError(SetRLError):
    code = "EMPTY_BATCH"


class SetSizeTooLargeError(SetRLError):
    code = "SET_SIZE_TOO_LARGE"


class KOutOfRangeError(SetRLError):
    code = "K_OUT_OF_RANGE"


class MissingClustersError(SetRLError):
    code = "MISSING_CLUSTERS"


class DimensionMismatchError(SetRLError):
    code = "DIMENSION_MISMATCH"


class DegenerateNError(SetRLError):
    code = "DEGENERATE_N"


class TooManyResponsesError(SetRLError):
    code = "TOO_MANY_RESPONSES"


class MalformedJsonError(SetRLError):
    code = "MALFORMED_JSON"


class WrongKeyCountError(SetRLError):
    code = "WRONG_KEY_COUNT"


class MissingClusterIdError(SetRLError):
    code = "MISSING_CLUSTER_ID"


class JudgeUnavailableError(SetRLError):
    code = "JUDGE_UNAVAILABLE"


class EnumerationTooLargeError(SetRLError):
    code = "ENUMERATION_TOO_LARGE"


class InvalidParamsError(SetRLError):
    code = "INVALID_PARAMS"


class KExceedsNError(SetRLError):
    code = "K_EXCEEDS_N"


class EmptyInputError(SetRLError):
    code = "EMPTY_INPUT"


class ConfigInvalidError(SetRLError):
    code = "CONFIG_INVALID"

"""Exception hierarchy for the retrieval pipeline."""

from __future__ import annotations


class GranAlignError(Exception):
    """Base class for every error raised by this package."""


# provider errors
class ProviderError(GranAlignError):
    pass


class RemoteUnavailable(ProviderError):
    """The HTTP backend could not be reached or answered with a server error."""


class ContractViolation(ProviderError):
    """A provider returned output that breaks its contract (after the allowed retry)."""


class CacheMiss(ProviderError):
    """A file-backed provider has no record for the requested key."""


# pipeline stage errors
class RewriteFailed(GranAlignError):
    pass


class GuidanceEmpty(GranAlignError):
    pass


class CaptionFailed(GranAlignError):
    def __init__(self, video_id: str, frame_index: int, reason: str = ""):
        self.video_id = video_id
        self.frame_index = frame_index
        msg = f"captioning failed for video {video_id!r} frame {frame_index}"
        if reason:
            msg += f": {reason}"
        super().__init__(msg)


class DimensionMismatch(GranAlignError, ValueError):
    pass


class EmptySeries(GranAlignError, ValueError):
    pass


# evaluation errors
class MissingPrediction(GranAlignError, KeyError):
    def __str__(self) -> str:  # KeyError quotes its message otherwise
        return str(self.args[0]) if self.args else "missing prediction"


class LabelLengthMismatch(GranAlignError, ValueError):
    pass


# data errors
class ParseError(GranAlignError, ValueError):
    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class SchemaError(ParseError):
    def __init__(self, field: str, line: int | None = None):
        self.field = field
        super().__init__(f"missing required field {field!r}", line)


class MissingDuration(GranAlignError, KeyError):
    def __str__(self) -> str:
        return str(self.args[0]) if self.args else "missing duration"


class LengthMismatch(ParseError):
    pass


class IoError(GranAlignError, OSError):
    pass


class ConfigError(GranAlignError, ValueError):
    pass

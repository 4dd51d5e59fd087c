"""Exception hierarchy shared across the toolkit."""


class PatternForgeError(Exception):
    """Base class for all toolkit errors."""


class PbmParseError(PatternForgeError):
    """Malformed PBM input. Carries the byte offset of the offending data."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (byte offset {offset})")
        self.offset = offset


class BoundsError(PatternForgeError):
    """A rectangle or coordinate falls outside the grid."""


class DimensionMismatchError(PatternForgeError):
    """Two grids that must share a shape do not."""


class QuantizationError(PatternForgeError):
    """A physical length is not divisible by the pixel pitch."""


class RuleConfigError(PatternForgeError):
    """Inconsistent or incomplete rule configuration."""


class MetricsError(PatternForgeError):
    """Invalid input to a metric computation (empty library, rank-0 data, ...)."""


class SelectionError(PatternForgeError):
    """Representative selection cannot satisfy its constraints."""


class ProtocolError(PatternForgeError):
    """Backend wire-protocol violation. Carries the offending field path."""

    def __init__(self, message: str, field_path: str = ""):
        if field_path:
            message = f"{message} (at '{field_path}')"
        super().__init__(message)
        self.field_path = field_path


class BackendError(PatternForgeError):
    """An external or built-in variation backend failed."""


class TopologyError(PatternForgeError):
    """A topology matrix violates minimality or shape requirements."""

"""Exception hierarchy shared by every lfcodec module."""


class LfCodecError(Exception):
    """Base class for all errors raised by lfcodec."""


class ConfigError(LfCodecError):
    """Invalid user-supplied configuration."""


class DataError(LfCodecError):
    """Input data is missing, malformed or inconsistent."""


class MissingView(DataError):
    pass


class DimensionMismatch(DataError):
    pass


class UnsupportedBitDepth(DataError):
    pass


class InvalidSelection(ConfigError):
    pass


class TargetTooSmall(ConfigError):
    pass


class InvalidGrid(ConfigError):
    pass


class CorruptStream(DataError):
    """A bitstream violates its syntax or fails an integrity check."""

    def __init__(self, message, substream=None):
        super().__init__(message)
        self.substream = substream


class VersionMismatch(CorruptStream):
    pass


class RefMismatch(DataError):
    """The decoder was handed a reference list that does not match the stream."""


class NoOverlap(DataError):
    pass


class DegenerateFit(DataError):
    pass


class TooSmall(DataError):
    pass

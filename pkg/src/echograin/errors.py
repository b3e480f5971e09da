"""Exception and warning taxonomy shared by all echograin modules.

Three broad families matter to callers (and to the CLI exit-code mapping):

* ``ParseError`` -- the input bytes / store content are malformed,
* ``TransferError`` -- the data could not be read or written at all,
* everything else under ``EchograinError`` -- the request itself was
  inconsistent (bad parameters, missing frequency, ...).
"""


class EchograinError(Exception):
    """Base class for every error raised by this package."""


# ---------------------------------------------------------------------------
# parse family: malformed input content
# ---------------------------------------------------------------------------

class ParseError(EchograinError):
    """Input content violates the expected format."""


class LengthMismatch(ParseError):
    """Leading and trailing frame lengths disagree, or a frame is too short."""


class Truncated(ParseError):
    """Byte stream ended in the middle of a frame."""


class Oversize(ParseError):
    """Declared frame length exceeds the configured cap."""


class BadType(ParseError):
    """Datagram type code contains non-printable ASCII."""


class ShortBody(ParseError):
    """Record body is smaller than its fixed header."""


class SampleLengthMismatch(ParseError):
    """Declared sample count is inconsistent with the body length."""


class NotAscii(ParseError):
    """NMEA body contains non-ASCII bytes."""


class MissingDollar(ParseError):
    """NMEA body does not start with '$'."""


class CountOutOfRange(ParseError):
    """Configuration transducer count outside [1, 64]."""


class BlockLengthMismatch(ParseError):
    """Configuration body length inconsistent with its transducer count."""


class NoConfiguration(ParseError):
    """Sample data appeared before any configuration record."""


class MalformedCoordinate(ParseError):
    """Non-numeric text where NMEA coordinate digits were expected."""


class CorruptMetadata(ParseError):
    """Store metadata file is missing required keys or has bad values."""


class ChunkSizeMismatch(ParseError):
    """Decoded chunk byte length does not match the chunk shape."""


class MissingGroup(ParseError):
    """A required group directory is absent from the store."""


# ---------------------------------------------------------------------------
# transfer family: I/O and transport failures
# ---------------------------------------------------------------------------

class TransferError(EchograinError):
    """Reading or writing bytes failed."""


class IoFailure(TransferError):
    """Local filesystem operation failed."""


class NotFound(TransferError):
    """Local path does not exist, or the server answered 404."""


class HttpStatus(TransferError):
    """Unexpected HTTP status code."""

    def __init__(self, code: int, message: str = ""):
        self.code = code
        super().__init__(message or f"HTTP status {code}")


class NetworkTimeout(TransferError):
    """HTTP request exceeded its time budget."""


# ---------------------------------------------------------------------------
# request family: the caller asked for something inconsistent
# ---------------------------------------------------------------------------

class InvalidSpec(EchograinError):
    """Fixture specification is internally inconsistent."""


class DuplicatePingTime(EchograinError):
    """One channel carries two pings with the same timestamp."""


class DuplicateFrequency(EchograinError):
    """Two channels share one nominal frequency; grids would collide."""


class EmptyInput(EchograinError):
    """An operation that needs at least one element got none."""


class ChannelWithoutConfig(EchograinError):
    """A ping references a channel index missing from the configuration."""


class NoPings(EchograinError):
    """Dataset construction requires at least one sample record."""


class ShapeMismatch(EchograinError):
    """Array data does not match the declared metadata shape."""


class EmptyTrack(EchograinError):
    """Position-based selection requires a non-empty navigation track."""


class NonPositive(EchograinError):
    """A strictly positive physical parameter is zero or negative."""


class MissingCalParams(EchograinError):
    """Calibration parameters could not be resolved for a frequency."""


class InvalidParams(EchograinError):
    """Processing parameters violate their constraints."""


class FrequencyNotFound(EchograinError):
    """Requested frequency is not present in the grid."""


class GridMismatch(EchograinError):
    """Two channels do not share ping-time/range coordinates."""


class InvalidRange(EchograinError):
    """Display range is empty (vmin >= vmax)."""


# ---------------------------------------------------------------------------
# warnings: report-and-continue conditions
# ---------------------------------------------------------------------------

class FormatWarning(UserWarning):
    """Recoverable oddity in the input format (unknown bits, extra records)."""


class DataConsistencyWarning(UserWarning):
    """Values that are expected to be constant vary across the input."""


class CalibrationWarning(UserWarning):
    """Calibration fell back to a nearest-match table entry."""

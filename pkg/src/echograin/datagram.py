"""Length-framed datagram container and the RAW0 / NME0 / CON0 record codecs.

Framing (all integers little-endian)::

    [len: u32][type: 4 ASCII][filetime_low: u32][filetime_high: u32]
    [body: len - 12 bytes][len: u32]

Timestamps on the wire are FILETIME values (100 ns ticks since
1601-01-01T00:00:00Z); in memory every timestamp is a signed 64-bit count
of nanoseconds since the Unix epoch.

``generate_fixture`` synthesizes complete, well-formed files together with
their ground-truth record lists and is the round-trip oracle used by the
test suite.
"""

from __future__ import annotations

import struct
import warnings
from dataclasses import dataclass
from typing import BinaryIO, Optional, Sequence

import numpy as np

from .errors import (
    BadType,
    BlockLengthMismatch,
    CountOutOfRange,
    FormatWarning,
    InvalidSpec,
    LengthMismatch,
    MissingDollar,
    NotAscii,
    Oversize,
    SampleLengthMismatch,
    ShortBody,
    Truncated,
)

# Seconds between 1601-01-01 and 1970-01-01 (proleptic Gregorian, UTC).
FILETIME_EPOCH_OFFSET_NS = 11_644_473_600 * 10**9

DEFAULT_MAX_DATAGRAM_BYTES = 16 * 1024 * 1024

_FRAME_LEN = struct.Struct("<I")
_FRAME_HEAD = struct.Struct("<4sII")          # type code, filetime low, high

_RAW0_HEADER = struct.Struct("<hh12fhhii")    # 64 bytes
_CON0_HEADER = struct.Struct("<128s128s128s30s98si")   # 516 bytes
_CON0_BLOCK = struct.Struct("<128s7f5f5f5f52s")        # 268 bytes

RAW0_HEADER_BYTES = _RAW0_HEADER.size
CON0_HEADER_BYTES = _CON0_HEADER.size
CON0_BLOCK_BYTES = _CON0_BLOCK.size

MODE_POWER = 0x1
MODE_ANGLE = 0x2

_I16 = np.dtype("<i2")
_I8 = np.dtype("<i1")


def filetime_to_unix_ns(low: int, high: int) -> int:
    """Convert a FILETIME (low, high) u32 pair to Unix nanoseconds.

    Negative results are legal and denote pre-1970 times.
    """
    ticks = (high << 32) | low
    return ticks * 100 - FILETIME_EPOCH_OFFSET_NS


def unix_ns_to_filetime(timestamp_ns: int) -> tuple[int, int]:
    """Inverse of :func:`filetime_to_unix_ns` for 100 ns-aligned stamps."""
    ticks, rem = divmod(timestamp_ns + FILETIME_EPOCH_OFFSET_NS, 100)
    if rem:
        raise ValueError(
            f"timestamp {timestamp_ns} ns is not representable at 100 ns resolution"
        )
    if not 0 <= ticks < 1 << 64:
        raise ValueError(f"timestamp {timestamp_ns} ns outside the FILETIME range")
    return ticks & 0xFFFFFFFF, ticks >> 32


@dataclass(frozen=True)
class Datagram:
    """One framed record: 4-character type code, timestamp, raw body bytes."""

    type_code: str
    timestamp_ns: int
    body: bytes = b""


def read_datagram(
    src: BinaryIO, max_bytes: int = DEFAULT_MAX_DATAGRAM_BYTES
) -> Optional[Datagram]:
    """Read one framed datagram from ``src``; return None at end of stream.

    ``src`` must be positioned on a frame boundary. Consumes exactly
    4 + L + 4 bytes on success.
    """
    head = src.read(4)
    if len(head) == 0:
        return None
    if len(head) < 4:
        raise Truncated("stream ended inside a frame length field")
    (length,) = _FRAME_LEN.unpack(head)
    if length > max_bytes:
        raise Oversize(f"frame length {length} exceeds cap {max_bytes}")
    if length < 12:
        raise LengthMismatch(f"frame length {length} cannot hold the 12-byte record header")
    payload = src.read(length)
    if len(payload) < length:
        raise Truncated(f"stream ended inside a {length}-byte frame payload")
    tail = src.read(4)
    if len(tail) < 4:
        raise Truncated("stream ended before the trailing frame length")
    (trailing,) = _FRAME_LEN.unpack(tail)
    if trailing != length:
        raise LengthMismatch(f"leading length {length} != trailing length {trailing}")
    raw_type, low, high = _FRAME_HEAD.unpack_from(payload, 0)
    if any(b < 0x20 or b > 0x7E for b in raw_type):
        raise BadType(f"non-printable type code {raw_type!r}")
    return Datagram(raw_type.decode("ascii"), filetime_to_unix_ns(low, high), payload[12:])


def write_datagram(dg: Datagram) -> bytes:
    """Frame one datagram (inverse of :func:`read_datagram`)."""
    raw_type = dg.type_code.encode("ascii")
    if len(raw_type) != 4:
        raise ValueError(f"type code must be 4 ASCII characters, got {dg.type_code!r}")
    low, high = unix_ns_to_filetime(dg.timestamp_ns)
    length = 12 + len(dg.body)
    return b"".join(
        (
            _FRAME_LEN.pack(length),
            _FRAME_HEAD.pack(raw_type, low, high),
            dg.body,
            _FRAME_LEN.pack(length),
        )
    )


def iter_datagrams(src: BinaryIO, max_bytes: int = DEFAULT_MAX_DATAGRAM_BYTES):
    """Yield datagrams until end of stream."""
    while True:
        dg = read_datagram(src, max_bytes)
        if dg is None:
            return
        yield dg


# ---------------------------------------------------------------------------
# RAW0
# ---------------------------------------------------------------------------

@dataclass(eq=False)
class PingRecord:
    """One parsed RAW0 sample record.

    ``power_counts`` is int16; each count is 10*log10(2)/256 dB.
    ``angle_counts`` has shape (n, 2): alongship then athwartship int8,
    each count 180/128 electrical degrees. ``extra`` holds any payload
    bytes past the layout implied by the known mode bits.
    """

    channel: int
    mode: int
    transducer_depth_m: float
    frequency_hz: float
    transmit_power_w: float
    pulse_length_s: float
    bandwidth_hz: float
    sample_interval_s: float
    sound_velocity_m_s: float
    absorption_db_m: float
    heave_m: float
    roll_deg: float
    pitch_deg: float
    temperature_c: float
    sample_offset: int
    sample_count: int
    power_counts: np.ndarray
    angle_counts: np.ndarray
    extra: bytes = b""

    def __eq__(self, other) -> bool:
        if not isinstance(other, PingRecord):
            return NotImplemented
        scalars = (
            "channel", "mode", "transducer_depth_m", "frequency_hz",
            "transmit_power_w", "pulse_length_s", "bandwidth_hz",
            "sample_interval_s", "sound_velocity_m_s", "absorption_db_m",
            "heave_m", "roll_deg", "pitch_deg", "temperature_c",
            "sample_offset", "sample_count", "extra",
        )
        return all(getattr(self, f) == getattr(other, f) for f in scalars) and (
            np.array_equal(self.power_counts, other.power_counts)
            and np.array_equal(self.angle_counts, other.angle_counts)
        )


def parse_raw0(body: bytes) -> PingRecord:
    """Decode a RAW0 body (64-byte fixed header, then sample vectors)."""
    if len(body) < RAW0_HEADER_BYTES:
        raise ShortBody(f"RAW0 body is {len(body)} bytes, header needs {RAW0_HEADER_BYTES}")
    (
        channel, mode, depth, freq, power, pulse, bandwidth, interval,
        velocity, absorption, heave, roll, pitch, temperature,
        _spare1, _spare2, offset, count,
    ) = _RAW0_HEADER.unpack_from(body, 0)
    if count < 0:
        raise SampleLengthMismatch(f"negative sample count {count}")
    expected = RAW0_HEADER_BYTES
    if mode & MODE_POWER:
        expected += 2 * count
    if mode & MODE_ANGLE:
        expected += 2 * count
    unknown_bits = mode & ~(MODE_POWER | MODE_ANGLE)
    if unknown_bits:
        if len(body) < expected:
            raise SampleLengthMismatch(
                f"body length {len(body)} < {expected} required by known mode bits"
            )
        warnings.warn(
            f"RAW0 mode {mode:#x} sets unknown bits {unknown_bits:#x}; "
            f"{len(body) - expected} trailing bytes kept unparsed",
            FormatWarning,
            stacklevel=2,
        )
    elif len(body) != expected:
        raise SampleLengthMismatch(
            f"body length {len(body)} != {expected} for count {count}, mode {mode:#x}"
        )

    pos = RAW0_HEADER_BYTES
    if mode & MODE_POWER:
        power_counts = np.frombuffer(body, dtype=_I16, count=count, offset=pos)
        pos += 2 * count
    else:
        power_counts = np.empty(0, dtype=_I16)
    if mode & MODE_ANGLE:
        angle_counts = np.frombuffer(body, dtype=_I8, count=2 * count, offset=pos)
        angle_counts = angle_counts.reshape(count, 2)
        pos += 2 * count
    else:
        angle_counts = np.empty((0, 2), dtype=_I8)

    return PingRecord(
        channel=channel,
        mode=mode,
        transducer_depth_m=depth,
        frequency_hz=freq,
        transmit_power_w=power,
        pulse_length_s=pulse,
        bandwidth_hz=bandwidth,
        sample_interval_s=interval,
        sound_velocity_m_s=velocity,
        absorption_db_m=absorption,
        heave_m=heave,
        roll_deg=roll,
        pitch_deg=pitch,
        temperature_c=temperature,
        sample_offset=offset,
        sample_count=count,
        power_counts=power_counts,
        angle_counts=angle_counts,
        extra=body[pos:],
    )


def serialize_raw0(rec: PingRecord) -> bytes:
    """Encode a PingRecord as a RAW0 body (inverse of :func:`parse_raw0`)."""
    n_power = rec.sample_count if rec.mode & MODE_POWER else 0
    n_angle = rec.sample_count if rec.mode & MODE_ANGLE else 0
    if len(rec.power_counts) != n_power:
        raise ValueError(f"power vector length {len(rec.power_counts)} != {n_power}")
    if len(rec.angle_counts) != n_angle:
        raise ValueError(f"angle vector length {len(rec.angle_counts)} != {n_angle}")
    header = _RAW0_HEADER.pack(
        rec.channel, rec.mode, rec.transducer_depth_m, rec.frequency_hz,
        rec.transmit_power_w, rec.pulse_length_s, rec.bandwidth_hz,
        rec.sample_interval_s, rec.sound_velocity_m_s, rec.absorption_db_m,
        rec.heave_m, rec.roll_deg, rec.pitch_deg, rec.temperature_c,
        0, 0, rec.sample_offset, rec.sample_count,
    )
    parts = [header]
    if rec.mode & MODE_POWER:
        parts.append(np.ascontiguousarray(rec.power_counts, dtype=_I16).tobytes())
    if rec.mode & MODE_ANGLE:
        parts.append(np.ascontiguousarray(rec.angle_counts, dtype=_I8).tobytes())
    parts.append(rec.extra)
    return b"".join(parts)


# ---------------------------------------------------------------------------
# NME0
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class NmeaSentence:
    """Parsed NMEA 0183 sentence.

    ``fields`` holds every comma-separated token including the leading
    talker+type; ``checksum_hex`` keeps the literal two characters after
    '*' (None when the sentence carried no checksum).
    """

    talker_and_type: str
    fields: tuple[str, ...]
    checksum_valid: bool
    checksum_hex: Optional[str] = None


def nmea_checksum(payload: str) -> int:
    """XOR of all payload bytes (the text strictly between '$' and '*')."""
    value = 0
    for b in payload.encode("ascii"):
        value ^= b
    return value


def parse_nme0(body: bytes) -> NmeaSentence:
    """Decode an NME0 body: an ASCII NMEA sentence starting with '$'."""
    try:
        text = body.decode("ascii")
    except UnicodeDecodeError as exc:
        raise NotAscii(f"NMEA body is not ASCII: {exc}") from None
    text = text.rstrip("\r\n\x00")
    if not text.startswith("$"):
        raise MissingDollar(f"NMEA sentence does not start with '$': {text[:16]!r}")
    star = text.rfind("*")
    if star < 0:
        payload, checksum_hex = text[1:], None
    else:
        payload, checksum_hex = text[1:star], text[star + 1:]
    fields = tuple(payload.split(","))
    valid = False
    if checksum_hex is not None and len(checksum_hex) == 2:
        try:
            valid = int(checksum_hex, 16) == nmea_checksum(payload)
        except ValueError:
            valid = False
    return NmeaSentence(fields[0], fields, valid, checksum_hex)


def serialize_nme0(sentence: NmeaSentence) -> bytes:
    """Rebuild the sentence bytes ("$<payload>*<hex>")."""
    payload = ",".join(sentence.fields)
    if sentence.checksum_hex is None:
        return ("$" + payload).encode("ascii")
    return ("$" + payload + "*" + sentence.checksum_hex).encode("ascii")


def make_sentence(fields: Sequence[str]) -> NmeaSentence:
    """Build a sentence from fields with a freshly computed valid checksum."""
    payload = ",".join(fields)
    return NmeaSentence(
        fields[0], tuple(fields), True, f"{nmea_checksum(payload):02X}"
    )


# ---------------------------------------------------------------------------
# CON0
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TransducerConfig:
    """Per-channel installation and calibration constants."""

    channel_id: str
    frequency_hz: float
    gain_db: float
    equivalent_beam_angle_db: float
    beamwidth_alongship_deg: float
    beamwidth_athwartship_deg: float
    angle_sensitivity_alongship: float
    angle_sensitivity_athwartship: float
    pulse_length_table_s: tuple[float, ...]
    gain_table_db: tuple[float, ...]
    sa_correction_table_db: tuple[float, ...]

    def __post_init__(self):
        for name in ("pulse_length_table_s", "gain_table_db", "sa_correction_table_db"):
            if len(getattr(self, name)) != 5:
                raise ValueError(f"{name} must have exactly 5 entries")


@dataclass(frozen=True)
class SonarConfig:
    """Decoded CON0 content: identification plus one block per transducer."""

    survey_name: str
    transect_name: str
    sounder_name: str
    version: str
    transducer_count: int
    transducers: tuple[TransducerConfig, ...]


def _trim(raw: bytes) -> str:
    return raw.rstrip(b"\x00").decode("ascii")


def _pad(text: str, width: int) -> bytes:
    raw = text.encode("ascii")
    if len(raw) > width:
        raise ValueError(f"string {text!r} longer than its {width}-byte field")
    return raw.ljust(width, b"\x00")


def parse_con0(body: bytes) -> SonarConfig:
    """Decode a CON0 body (fixed header plus per-transducer blocks)."""
    if len(body) < CON0_HEADER_BYTES:
        raise ShortBody(f"CON0 body is {len(body)} bytes, header needs {CON0_HEADER_BYTES}")
    survey, transect, sounder, version, _spare, count = _CON0_HEADER.unpack_from(body, 0)
    if not 1 <= count <= 64:
        raise CountOutOfRange(f"transducer count {count} outside [1, 64]")
    expected = CON0_HEADER_BYTES + count * CON0_BLOCK_BYTES
    if len(body) != expected:
        raise BlockLengthMismatch(
            f"body length {len(body)} != {expected} for {count} transducers"
        )
    transducers = []
    for i in range(count):
        vals = _CON0_BLOCK.unpack_from(body, CON0_HEADER_BYTES + i * CON0_BLOCK_BYTES)
        transducers.append(
            TransducerConfig(
                channel_id=_trim(vals[0]),
                frequency_hz=vals[1],
                gain_db=vals[2],
                equivalent_beam_angle_db=vals[3],
                beamwidth_alongship_deg=vals[4],
                beamwidth_athwartship_deg=vals[5],
                angle_sensitivity_alongship=vals[6],
                angle_sensitivity_athwartship=vals[7],
                pulse_length_table_s=tuple(vals[8:13]),
                gain_table_db=tuple(vals[13:18]),
                sa_correction_table_db=tuple(vals[18:23]),
            )
        )
    return SonarConfig(
        survey_name=_trim(survey),
        transect_name=_trim(transect),
        sounder_name=_trim(sounder),
        version=_trim(version),
        transducer_count=count,
        transducers=tuple(transducers),
    )


def serialize_con0(cfg: SonarConfig) -> bytes:
    """Encode a SonarConfig as a CON0 body (inverse of :func:`parse_con0`)."""
    if cfg.transducer_count != len(cfg.transducers):
        raise ValueError("transducer_count does not match the transducer list")
    parts = [
        _CON0_HEADER.pack(
            _pad(cfg.survey_name, 128),
            _pad(cfg.transect_name, 128),
            _pad(cfg.sounder_name, 128),
            _pad(cfg.version, 30),
            b"\x00" * 98,
            cfg.transducer_count,
        )
    ]
    for t in cfg.transducers:
        parts.append(
            _CON0_BLOCK.pack(
                _pad(t.channel_id, 128),
                t.frequency_hz,
                t.gain_db,
                t.equivalent_beam_angle_db,
                t.beamwidth_alongship_deg,
                t.beamwidth_athwartship_deg,
                t.angle_sensitivity_alongship,
                t.angle_sensitivity_athwartship,
                *t.pulse_length_table_s,
                *t.gain_table_db,
                *t.sa_correction_table_db,
                b"\x00" * 52,
            )
        )
    return b"".join(parts)


# ---------------------------------------------------------------------------
# fixture generator (the parsing oracle)
# ---------------------------------------------------------------------------

_DEFAULT_START_NS = 1_496_275_200_000_000_000   # 2017-06-01T00:00:00Z
_NOMINAL_FREQS_HZ = (18_000.0, 38_000.0, 70_000.0, 120_000.0, 200_000.0, 333_000.0)


def _f32(x) -> float:
    """Quantize to the nearest float32 so wire round-trips are exact."""
    return float(np.float32(x))


@dataclass
class FixtureSpec:
    """Recipe for one synthetic raw file.

    ``reversals`` lists (ping_index, back_shift_s) pairs: the RAW0
    datagrams of ping event ``ping_index`` keep their scheduled emission
    slot but carry a timestamp shifted backwards by ``back_shift_s``.
    ``missing_pings`` lists (ping_index, channel_index) events to skip,
    which produces ragged ping schedules across channels.
    """

    seed: int = 0
    n_channels: int = 2
    n_pings: int = 10
    start_ns: int = _DEFAULT_START_NS
    ping_interval_s: float = 1.0
    time_jitter_s: float = 0.0
    sample_counts: Optional[Sequence[Sequence[int]]] = None   # [channel][ping]
    count_range: tuple[int, int] = (20, 50)
    mode: int = MODE_POWER | MODE_ANGLE
    n_nmea: int = 0
    track_start: tuple[float, float] = (47.60, -122.33)
    track_step: tuple[float, float] = (0.01, -0.01)
    reversals: Sequence[tuple[int, float]] = ()
    missing_pings: Sequence[tuple[int, int]] = ()
    channels: Optional[Sequence[TransducerConfig]] = None
    survey_name: str = "SyntheticSurvey"

    def validate(self) -> None:
        if self.n_channels < 1 or self.n_channels > 64:
            raise InvalidSpec(f"n_channels {self.n_channels} outside [1, 64]")
        if self.n_pings < 0:
            raise InvalidSpec("n_pings must be >= 0")
        if self.start_ns % 100:
            raise InvalidSpec("start_ns must sit on the 100 ns wire resolution")
        if self.ping_interval_s <= 0:
            raise InvalidSpec("ping_interval_s must be > 0")
        if not 0 <= self.time_jitter_s <= 0.4 * self.ping_interval_s:
            raise InvalidSpec("time_jitter_s must stay below 0.4 * ping_interval_s")
        if self.mode & ~(MODE_POWER | MODE_ANGLE) or self.mode == 0:
            raise InvalidSpec(f"mode {self.mode:#x} must set only the power/angle bits")
        if self.count_range[0] < 0 or self.count_range[1] < self.count_range[0]:
            raise InvalidSpec(f"bad count_range {self.count_range}")
        if self.sample_counts is not None:
            if len(self.sample_counts) != self.n_channels:
                raise InvalidSpec("sample_counts needs one list per channel")
            for per_ping in self.sample_counts:
                if len(per_ping) != self.n_pings:
                    raise InvalidSpec("sample_counts needs one count per ping")
                if any(c < 0 for c in per_ping):
                    raise InvalidSpec("sample counts must be >= 0")
        if self.channels is not None and len(self.channels) != self.n_channels:
            raise InvalidSpec("channels list must match n_channels")
        seen = set()
        for idx, shift_s in self.reversals:
            if not 1 <= idx < self.n_pings:
                raise InvalidSpec(f"reversal index {idx} needs a predecessor ping")
            if idx in seen or (idx - 1) in seen or (idx + 1) in seen:
                raise InvalidSpec("reversal indices must be non-adjacent")
            if shift_s <= self.ping_interval_s + self.time_jitter_s:
                raise InvalidSpec(
                    f"back shift {shift_s} s too small to reverse a "
                    f"{self.ping_interval_s} s schedule"
                )
            seen.add(idx)
        for idx, ch in self.missing_pings:
            if not 0 <= idx < self.n_pings or not 0 <= ch < self.n_channels:
                raise InvalidSpec(f"missing ping ({idx}, {ch}) out of range")
        for ch in range(self.n_channels):
            gone = {i for i, c in self.missing_pings if c == ch}
            if len(gone) >= self.n_pings and self.n_pings > 0:
                raise InvalidSpec(f"channel {ch} would have no pings at all")


@dataclass
class FixtureTruth:
    """Ground truth emitted alongside the synthetic bytes."""

    config: SonarConfig
    config_timestamp_ns: int
    records: list[tuple[str, int, object]]        # file order: (type, ts, parsed)
    pings: list[tuple[int, PingRecord]]           # RAW0 subset, file order
    nmea: list[tuple[int, NmeaSentence]]          # NME0 subset, file order
    track: list[tuple[int, float, float]]         # (ts, lat, lon) of valid fixes
    nominal_times_ns: list[int]                   # schedule before reversals
    emitted_times_ns: list[int]                   # schedule after reversals
    reversals: list[tuple[int, int]]              # (ping index, back shift ns)


def _random_channels(rng: np.random.Generator, n: int) -> list[TransducerConfig]:
    # prefer the common survey bands; the extension only matters for many channels
    pool = list(_NOMINAL_FREQS_HZ) + [400_000.0 + 50_000.0 * i for i in range(64)]
    candidates = pool[: max(len(_NOMINAL_FREQS_HZ), n)]
    freqs = sorted(rng.choice(len(candidates), size=n, replace=False))
    out = []
    for i, fi in enumerate(freqs):
        freq = candidates[fi]
        gain = _f32(rng.uniform(20.0, 28.0))
        table = (64e-6, 128e-6, 256e-6, 512e-6, 1024e-6)
        out.append(
            TransducerConfig(
                channel_id=f"GPT {freq / 1000:.0f} kHz 00907203{i:02x} 1-1 ES{freq / 1000:.0f}",
                frequency_hz=_f32(freq),
                gain_db=gain,
                equivalent_beam_angle_db=_f32(rng.uniform(-21.0, -15.0)),
                beamwidth_alongship_deg=_f32(rng.uniform(6.0, 12.0)),
                beamwidth_athwartship_deg=_f32(rng.uniform(6.0, 12.0)),
                angle_sensitivity_alongship=_f32(rng.uniform(15.0, 25.0)),
                angle_sensitivity_athwartship=_f32(rng.uniform(15.0, 25.0)),
                pulse_length_table_s=tuple(_f32(v) for v in table),
                gain_table_db=tuple(_f32(gain + rng.uniform(-0.5, 0.5)) for _ in table),
                sa_correction_table_db=tuple(_f32(rng.uniform(-0.8, 0.0)) for _ in table),
            )
        )
    return out


def _deg_to_nmea(value: float, is_lat: bool) -> tuple[str, str, float]:
    """Format decimal degrees as (ddmm.mmmm text, hemisphere, encoded value).

    The returned value is what the text itself encodes (minutes rounded to
    four decimals), i.e. what a parser must recover.
    """
    if is_lat:
        hemi = "N" if value >= 0 else "S"
        deg_width = 2
    else:
        hemi = "E" if value >= 0 else "W"
        deg_width = 3
    mag = abs(value)
    degrees = int(mag)
    minutes = round((mag - degrees) * 60.0, 4)
    if minutes >= 60.0:          # rounding spilled into the next degree
        minutes = 0.0
        degrees += 1
    text = f"{degrees:0{deg_width}d}{minutes:07.4f}"
    encoded = degrees + minutes / 60.0
    if hemi in ("S", "W"):
        encoded = -encoded
    return text, hemi, encoded


def _time_to_hhmmss(ts_ns: int) -> str:
    secs = (ts_ns // 10**9) % 86400
    h, rem = divmod(secs, 3600)
    m, s = divmod(rem, 60)
    return f"{h:02d}{m:02d}{s:02d}.00"


def _make_track_sentence(
    index: int, ts_ns: int, lat: float, lon: float
) -> tuple[NmeaSentence, float, float]:
    lat_text, lat_hemi, lat_val = _deg_to_nmea(lat, is_lat=True)
    lon_text, lon_hemi, lon_val = _deg_to_nmea(lon, is_lat=False)
    hhmmss = _time_to_hhmmss(ts_ns)
    if index % 2 == 0:
        fields = [
            "GPGGA", hhmmss, lat_text, lat_hemi, lon_text, lon_hemi,
            "1", "08", "0.9", "5.0", "M", "46.9", "M", "", "",
        ]
    else:
        fields = [
            "GPRMC", hhmmss, "A", lat_text, lat_hemi, lon_text, lon_hemi,
            "10.1", "83.5", "010617", "", "",
        ]
    return make_sentence(fields), lat_val, lon_val


def generate_fixture(spec: FixtureSpec) -> tuple[bytes, FixtureTruth]:
    """Emit a complete synthetic raw file plus its ground truth.

    The file holds one CON0 followed by NME0 and RAW0 datagrams merged in
    nominal-schedule order; injected reversals shift emitted RAW0
    timestamps without moving the records. Output is deterministic for a
    given spec (byte-identical across calls).
    """
    spec.validate()
    rng = np.random.default_rng(spec.seed)

    channels = list(spec.channels) if spec.channels is not None else _random_channels(
        rng, spec.n_channels
    )
    config = SonarConfig(
        survey_name=spec.survey_name,
        transect_name="T001",
        sounder_name="ER60",
        version="2.4.3",
        transducer_count=len(channels),
        transducers=tuple(channels),
    )

    # Per-channel constants (quantized to f32 so parse round-trips exactly).
    pulse_idx = rng.integers(0, 5, size=len(channels))
    per_channel = []
    for ci, t in enumerate(channels):
        pulse = t.pulse_length_table_s[pulse_idx[ci]]
        per_channel.append(
            dict(
                pulse_length_s=_f32(pulse),
                sample_interval_s=_f32(pulse / 4.0),
                transmit_power_w=_f32(rng.choice((500.0, 1000.0, 2000.0))),
                bandwidth_hz=_f32(rng.uniform(1000.0, 5000.0)),
                sound_velocity_m_s=_f32(rng.uniform(1480.0, 1520.0)),
                absorption_db_m=_f32(rng.uniform(0.005, 0.05)),
                transducer_depth_m=_f32(rng.uniform(0.0, 8.0)),
                temperature_c=_f32(rng.uniform(4.0, 18.0)),
            )
        )

    # Ping schedule: 100 ns aligned, strictly increasing.
    interval_ns = round(spec.ping_interval_s * 1e9)
    jitter_ns = (
        rng.integers(0, max(1, round(spec.time_jitter_s * 1e9)) // 100 + 1, size=spec.n_pings)
        * 100
        if spec.time_jitter_s > 0
        else np.zeros(spec.n_pings, dtype=np.int64)
    )
    nominal = [
        spec.start_ns + j * (interval_ns // 100) * 100 + int(jitter_ns[j])
        for j in range(spec.n_pings)
    ]
    emitted = list(nominal)
    reversals_ns = []
    taken = set(nominal)
    for idx, shift_s in spec.reversals:
        shift_ns = (round(shift_s * 1e9) // 100) * 100
        t = nominal[idx] - shift_ns
        while t in taken:      # keep per-channel timestamps unique
            t -= 100
        taken.add(t)
        emitted[idx] = t
        reversals_ns.append((idx, nominal[idx] - t))
    reversals_ns.sort()

    # Sample counts per (channel, ping).
    if spec.sample_counts is not None:
        counts = [list(c) for c in spec.sample_counts]
    else:
        lo, hi = spec.count_range
        counts = [
            [int(c) for c in rng.integers(lo, hi + 1, size=spec.n_pings)]
            for _ in range(len(channels))
        ]

    # Platform attitude is channel-invariant per ping event.
    heave = [_f32(v) for v in rng.uniform(-2.0, 2.0, size=spec.n_pings)]
    roll = [_f32(v) for v in rng.uniform(-10.0, 10.0, size=spec.n_pings)]
    pitch = [_f32(v) for v in rng.uniform(-10.0, 10.0, size=spec.n_pings)]

    missing = set((int(i), int(c)) for i, c in spec.missing_pings)

    # NMEA track spread over the nominal schedule.
    track_events = []
    if spec.n_nmea > 0:
        if spec.n_pings > 1:
            span = nominal[-1] - nominal[0]
            nmea_times = [
                nominal[0] + ((span * k // max(1, spec.n_nmea - 1)) // 100) * 100
                for k in range(spec.n_nmea)
            ]
        else:
            nmea_times = [spec.start_ns + k * 10**9 for k in range(spec.n_nmea)]
        for k, ts in enumerate(nmea_times):
            lat = spec.track_start[0] + k * spec.track_step[0]
            lon = spec.track_start[1] + k * spec.track_step[1]
            sentence, lat_val, lon_val = _make_track_sentence(k, ts, lat, lon)
            track_events.append((ts, k, sentence, lat_val, lon_val))

    # Merge events by nominal time; NMEA before RAW0 on equal stamps,
    # channels in index order within a ping event.
    events: list[tuple[int, int, int, object]] = []   # (nominal, kind, order, payload)
    for ts, k, sentence, lat_val, lon_val in track_events:
        events.append((ts, 0, k, (sentence, lat_val, lon_val)))
    for j in range(spec.n_pings):
        for ci in range(len(channels)):
            if (j, ci) in missing:
                continue
            events.append((nominal[j], 1, j * len(channels) + ci, (j, ci)))
    events.sort(key=lambda e: (e[0], e[1], e[2]))

    config_ts = spec.start_ns - 10**9
    frames = [write_datagram(Datagram("CON0", config_ts, serialize_con0(config)))]
    records: list[tuple[str, int, object]] = [("CON0", config_ts, config)]
    pings: list[tuple[int, PingRecord]] = []
    nmea: list[tuple[int, NmeaSentence]] = []
    track: list[tuple[int, float, float]] = []

    for ts, kind, _order, payload in events:
        if kind == 0:
            sentence, lat_val, lon_val = payload
            frames.append(write_datagram(Datagram("NME0", ts, serialize_nme0(sentence))))
            records.append(("NME0", ts, sentence))
            nmea.append((ts, sentence))
            track.append((ts, lat_val, lon_val))
        else:
            j, ci = payload
            const = per_channel[ci]
            n = counts[ci][j]
            power = rng.integers(-25000, 1, size=n).astype(_I16) \
                if spec.mode & MODE_POWER else np.empty(0, _I16)
            angles = rng.integers(-128, 128, size=(n, 2)).astype(_I8) \
                if spec.mode & MODE_ANGLE else np.empty((0, 2), _I8)
            rec = PingRecord(
                channel=ci + 1,
                mode=spec.mode,
                transducer_depth_m=const["transducer_depth_m"],
                frequency_hz=channels[ci].frequency_hz,
                transmit_power_w=const["transmit_power_w"],
                pulse_length_s=const["pulse_length_s"],
                bandwidth_hz=const["bandwidth_hz"],
                sample_interval_s=const["sample_interval_s"],
                sound_velocity_m_s=const["sound_velocity_m_s"],
                absorption_db_m=const["absorption_db_m"],
                heave_m=heave[j],
                roll_deg=roll[j],
                pitch_deg=pitch[j],
                temperature_c=const["temperature_c"],
                sample_offset=0,
                sample_count=n,
                power_counts=power,
                angle_counts=angles,
            )
            frames.append(write_datagram(Datagram("RAW0", emitted[j], serialize_raw0(rec))))
            records.append(("RAW0", emitted[j], rec))
            pings.append((emitted[j], rec))

    truth = FixtureTruth(
        config=config,
        config_timestamp_ns=config_ts,
        records=records,
        pings=pings,
        nmea=nmea,
        track=track,
        nominal_times_ns=nominal,
        emitted_times_ns=emitted,
        reversals=reversals_ns,
    )
    return b"".join(frames), truth


def parse_body(type_code: str, body: bytes):
    """Dispatch a body to its record parser; None for unknown type codes."""
    if type_code == "RAW0":
        return parse_raw0(body)
    if type_code == "NME0":
        return parse_nme0(body)
    if type_code == "CON0":
        return parse_con0(body)
    return None

"""Raw-source orchestration: byte sources, conversion, and position tools.

One conversion pass reads a datagram stream (local file or HTTP), parses
configuration, sample and navigation records, and assembles the
seven-group dataset. Navigation fixes support nearest-in-time matching of
pings to positions and geographic sub-setting of grids.
"""

from __future__ import annotations

import os
import time
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np
import requests

from . import __version__
from .datagram import (
    DEFAULT_MAX_DATAGRAM_BYTES,
    NmeaSentence,
    PingRecord,
    SonarConfig,
    parse_con0,
    parse_nme0,
    parse_raw0,
    read_datagram,
)
from .errors import (
    DataConsistencyWarning,
    EmptyTrack,
    HttpStatus,
    IoFailure,
    MalformedCoordinate,
    NetworkTimeout,
    NoConfiguration,
    NotFound,
    ParseError,
)
from .model import EchoData, LabeledGrid, build_echodata

USER_AGENT = f"echograin/{__version__}"

DEFAULT_TIMEOUT_S = 30.0
DEFAULT_RETRIES = 3
DEFAULT_BACKOFF_S = 0.5
_STREAM_CHUNK = 64 * 1024


@dataclass
class GeoTrack:
    """Timestamped platform positions from navigation sentences."""

    location_time: np.ndarray      # int64 ns, non-decreasing
    latitude_deg: np.ndarray
    longitude_deg: np.ndarray
    source: list[str] = field(default_factory=list)

    def __post_init__(self):
        self.location_time = np.ascontiguousarray(self.location_time, dtype=np.int64)
        self.latitude_deg = np.ascontiguousarray(self.latitude_deg, dtype=np.float64)
        self.longitude_deg = np.ascontiguousarray(self.longitude_deg, dtype=np.float64)
        n = len(self.location_time)
        if len(self.latitude_deg) != n or len(self.longitude_deg) != n:
            raise ValueError("track arrays must have equal length")
        if n > 1 and np.any(np.diff(self.location_time) < 0):
            raise ValueError("location_time must be non-decreasing")

    def __len__(self) -> int:
        return len(self.location_time)


class LocalByteSource:
    """Sequential + ranged reads over a local file."""

    def __init__(self, path):
        self.uri = str(path)
        p = Path(path)
        if not p.is_file():
            raise NotFound(f"no such file: {path}")
        try:
            self._fh = open(p, "rb")
            self.size: Optional[int] = p.stat().st_size
        except OSError as exc:
            raise IoFailure(f"cannot open {path}: {exc}") from exc

    def read(self, n: int = -1) -> bytes:
        return self._fh.read(n)

    def read_range(self, offset: int, length: int) -> bytes:
        pos = self._fh.tell()
        try:
            self._fh.seek(offset)
            return self._fh.read(length)
        finally:
            self._fh.seek(pos)

    def close(self) -> None:
        self._fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


class HttpByteSource:
    """Sequential streaming GET with optional ranged reads.

    The initial request is retried (3 attempts, exponential backoff from
    0.5 s); ranged reads require the server to advertise byte ranges.
    """

    def __init__(
        self,
        uri: str,
        timeout_s: float = DEFAULT_TIMEOUT_S,
        retries: int = DEFAULT_RETRIES,
        backoff_s: float = DEFAULT_BACKOFF_S,
    ):
        self.uri = uri
        self.timeout_s = timeout_s
        self._retries = max(1, retries)
        self._backoff_s = backoff_s
        self._session = requests.Session()
        self._session.headers["User-Agent"] = USER_AGENT
        self._response = self._request({})
        self.size = (
            int(self._response.headers["Content-Length"])
            if "Content-Length" in self._response.headers
            else None
        )
        self.accepts_ranges = (
            self._response.headers.get("Accept-Ranges", "").lower() == "bytes"
        )
        self._iter = self._response.iter_content(chunk_size=_STREAM_CHUNK)
        self._buffer = bytearray()
        self._exhausted = False

    def _request(self, headers: dict) -> requests.Response:
        delay = self._backoff_s
        last: Exception = RuntimeError("unreachable")
        for attempt in range(self._retries):
            try:
                resp = self._session.get(
                    self.uri, stream=True, timeout=self.timeout_s, headers=headers
                )
            except requests.Timeout as exc:
                raise NetworkTimeout(f"GET {self.uri} timed out: {exc}") from exc
            except requests.ConnectionError as exc:
                last = exc
                if attempt + 1 < self._retries:
                    time.sleep(delay)
                    delay *= 2
                continue
            if resp.status_code == 404:
                raise NotFound(f"GET {self.uri} -> 404")
            if resp.status_code not in (200, 206):
                raise HttpStatus(resp.status_code, f"GET {self.uri} -> {resp.status_code}")
            return resp
        raise NetworkTimeout(f"GET {self.uri} failed after {self._retries} attempts: {last}")

    def read(self, n: int = -1) -> bytes:
        if n < 0:
            parts = [bytes(self._buffer)]
            self._buffer.clear()
            parts.extend(self._iter)
            self._exhausted = True
            return b"".join(parts)
        while len(self._buffer) < n and not self._exhausted:
            try:
                self._buffer.extend(next(self._iter))
            except StopIteration:
                self._exhausted = True
            except requests.Timeout as exc:
                raise NetworkTimeout(f"stream from {self.uri} timed out: {exc}") from exc
        out = bytes(self._buffer[:n])
        del self._buffer[:n]
        return out

    def read_range(self, offset: int, length: int) -> bytes:
        if not self.accepts_ranges:
            raise HttpStatus(416, f"{self.uri} does not advertise byte ranges")
        resp = self._request({"Range": f"bytes={offset}-{offset + length - 1}"})
        try:
            return resp.content
        finally:
            resp.close()

    def close(self) -> None:
        self._response.close()
        self._session.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def open_byte_source(
    uri,
    timeout_s: float = DEFAULT_TIMEOUT_S,
    retries: int = DEFAULT_RETRIES,
    backoff_s: float = DEFAULT_BACKOFF_S,
):
    """Open a local path or http(s) URL for sequential reading."""
    text = str(uri)
    if text.startswith(("http://", "https://")):
        return HttpByteSource(text, timeout_s=timeout_s, retries=retries, backoff_s=backoff_s)
    return LocalByteSource(text)


# ---------------------------------------------------------------------------
# NMEA position extraction
# ---------------------------------------------------------------------------

def _degrees_minutes(text: str) -> float:
    dot = text.find(".")
    split = (dot if dot >= 0 else len(text)) - 2
    if split < 1:
        raise MalformedCoordinate(f"coordinate text too short: {text!r}")
    head, tail = text[:split], text[split:]
    if not head.isdigit():
        raise MalformedCoordinate(f"non-numeric degrees in {text!r}")
    try:
        minutes = float(tail)
    except ValueError:
        raise MalformedCoordinate(f"non-numeric minutes in {text!r}") from None
    return int(head) + minutes / 60.0


def parse_position(sentence: NmeaSentence) -> Optional[tuple[float, float]]:
    """Extract (latitude, longitude) in degrees, or None when not a fix.

    Understands GGA (fields 2-5) and RMC (fields 3-6). Coordinates use
    ddmm.mmmm / dddmm.mmmm encoding; S/W hemispheres negate. Sentences
    with invalid checksums, empty coordinate fields, unsupported types or
    out-of-range values are not fixes.
    """
    if not sentence.checksum_valid:
        return None
    kind = sentence.talker_and_type
    if kind.endswith("GGA"):
        lat_i, ns_i, lon_i, ew_i = 2, 3, 4, 5
    elif kind.endswith("RMC"):
        lat_i, ns_i, lon_i, ew_i = 3, 4, 5, 6
    else:
        return None
    if len(sentence.fields) <= ew_i:
        return None
    lat_text = sentence.fields[lat_i]
    ns = sentence.fields[ns_i]
    lon_text = sentence.fields[lon_i]
    ew = sentence.fields[ew_i]
    if not lat_text or not lon_text or ns not in ("N", "S") or ew not in ("E", "W"):
        return None
    lat = _degrees_minutes(lat_text)
    lon = _degrees_minutes(lon_text)
    if ns == "S":
        lat = -lat
    if ew == "W":
        lon = -lon
    if not (-90.0 <= lat <= 90.0 and -180.0 <= lon <= 180.0):
        return None
    return lat, lon


def track_from_echodata(ed: EchoData) -> GeoTrack:
    """Rebuild the navigation track stored in the Platform group."""
    platform = ed.platform
    return GeoTrack(
        location_time=platform.arrays["location_time"].values,
        latitude_deg=platform.arrays["latitude_deg"].values,
        longitude_deg=platform.arrays["longitude_deg"].values,
        source=list(platform.attrs.get("position_source", [])),
    )


# ---------------------------------------------------------------------------
# geographic slicing
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class BoundingBox:
    """Inclusive latitude/longitude bounds."""

    lat_min: float
    lat_max: float
    lon_min: float
    lon_max: float

    def contains(self, lat, lon):
        return (
            (self.lat_min <= lat) & (lat <= self.lat_max)
            & (self.lon_min <= lon) & (lon <= self.lon_max)
        )


def nearest_track_index(track: GeoTrack, times_ns: np.ndarray) -> np.ndarray:
    """Index of the track point nearest each time; ties pick the earlier."""
    if len(track) == 0:
        raise EmptyTrack("cannot match positions against an empty track")
    times_ns = np.asarray(times_ns, dtype=np.int64)
    right = np.searchsorted(track.location_time, times_ns, side="left")
    right = np.clip(right, 0, len(track) - 1)
    left = np.clip(right - 1, 0, len(track) - 1)
    d_left = np.abs(times_ns - track.location_time[left])
    d_right = np.abs(track.location_time[right] - times_ns)
    return np.where(d_left <= d_right, left, right)


def slice_by_position(grid: LabeledGrid, track: GeoTrack, bbox: BoundingBox) -> LabeledGrid:
    """Keep the pings whose nearest-in-time position falls inside ``bbox``."""
    idx = nearest_track_index(track, grid.ping_time)
    keep = bbox.contains(track.latitude_deg[idx], track.longitude_deg[idx])
    return LabeledGrid(
        grid.frequency_hz.copy(),
        grid.ping_time[keep],
        grid.values[:, keep, :],
    )


# ---------------------------------------------------------------------------
# conversion
# ---------------------------------------------------------------------------

@dataclass
class ConvertOptions:
    max_datagram_bytes: int = DEFAULT_MAX_DATAGRAM_BYTES
    conversion_time: Optional[str] = None      # ISO text; None -> wall clock


def _conversion_timestamp(explicit: Optional[str]) -> str:
    if explicit is not None:
        return explicit
    epoch = os.environ.get("SOURCE_DATE_EPOCH")
    stamp = int(epoch) if epoch else int(time.time())
    return time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime(stamp))


def convert_raw(src, options: Optional[ConvertOptions] = None) -> EchoData:
    """Single sequential pass: datagram stream to seven-group dataset.

    The stream must carry a configuration record before the first sample
    record. Unknown datagram types are counted, never fatal; extra
    configuration records are compared against the first and warned about
    when they differ.
    """
    opts = options or ConvertOptions()
    config: Optional[SonarConfig] = None
    pings: list[tuple[int, PingRecord]] = []
    nmea: list[tuple[int, NmeaSentence]] = []
    unknown: dict[str, int] = {}
    extra_configs = 0
    offset = 0

    while True:
        try:
            dg = read_datagram(src, opts.max_datagram_bytes)
        except ParseError as exc:
            raise type(exc)(f"byte {offset}: {exc}") from exc
        if dg is None:
            break
        frame_bytes = 20 + len(dg.body)
        try:
            if dg.type_code == "CON0":
                cfg = parse_con0(dg.body)
                if config is None:
                    config = cfg
                else:
                    extra_configs += 1
                    if cfg != config:
                        warnings.warn(
                            f"configuration record at byte {offset} differs from the "
                            "first one; keeping the first",
                            DataConsistencyWarning,
                            stacklevel=2,
                        )
            elif dg.type_code == "RAW0":
                if config is None:
                    raise NoConfiguration(
                        f"sample record at byte {offset} before any configuration"
                    )
                pings.append((dg.timestamp_ns, parse_raw0(dg.body)))
            elif dg.type_code == "NME0":
                nmea.append((dg.timestamp_ns, parse_nme0(dg.body)))
            else:
                unknown[dg.type_code] = unknown.get(dg.type_code, 0) + 1
        except NoConfiguration:
            raise
        except ParseError as exc:
            raise type(exc)(f"byte {offset} ({dg.type_code}): {exc}") from exc
        offset += frame_bytes

    if config is None:
        raise NoConfiguration("stream carries no configuration record")
    source_meta = {
        "source_files": [getattr(src, "uri", "<stream>")],
        "unknown_datagrams": unknown,
        "extra_configurations": extra_configs,
        "conversion_time": _conversion_timestamp(opts.conversion_time),
    }
    return build_echodata(config, pings, nmea, source_meta)


def convert_file(uri, options: Optional[ConvertOptions] = None) -> EchoData:
    """Open ``uri`` (path or URL), convert it, and close the source."""
    with open_byte_source(uri) as src:
        return convert_raw(src, options)

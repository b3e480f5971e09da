"""In-memory standardized dataset: labeled grids and the seven-group layout.

Ragged per-ping sample vectors are restructured into one dense 3-D array
over (frequency, ping_time, range_bin), padding with NaN where a ping is
shorter than the longest one or absent from a channel. The padded form is
lossless: together with the per-cell sample counts it reconstructs the
ragged source exactly.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Mapping, Optional, Sequence

import numpy as np

from . import __version__
from .datagram import MODE_ANGLE, NmeaSentence, PingRecord, SonarConfig
from .errors import (
    ChannelWithoutConfig,
    DataConsistencyWarning,
    DuplicateFrequency,
    DuplicatePingTime,
    EmptyInput,
    NoPings,
)

__all__ = [
    "GRID_DIMS", "GROUP_NAMES", "POWER_COUNT_DB", "ANGLE_COUNT_DEG",
    "LabeledGrid", "Mask", "Variable", "Group", "EchoData",
    "align_ragged", "grid_to_ragged", "power_counts_to_db",
    "angle_counts_to_deg", "build_echodata",
]

GRID_DIMS = ("frequency", "ping_time", "range_bin")

GROUP_NAMES = (
    "Top_level",
    "Environment",
    "Platform",
    "Provenance",
    "Sonar",
    "Beam",
    "Vendor",
)

# One instrument count of received power is 10*log10(2)/256 dB.
POWER_COUNT_DB = 10.0 * math.log10(2.0) / 256.0
# One angle count is 180/128 electrical degrees.
ANGLE_COUNT_DEG = 180.0 / 128.0

TIME_UNITS = "nanoseconds since 1970-01-01T00:00:00Z"


@dataclass(eq=False)
class LabeledGrid:
    """Dense 3-D array over (frequency, ping_time, range_bin).

    ``frequency_hz`` is strictly increasing, ``ping_time`` is int64
    nanoseconds, values are float64 C-order with NaN for missing cells.
    """

    frequency_hz: np.ndarray
    ping_time: np.ndarray
    values: np.ndarray

    dims = GRID_DIMS

    def __post_init__(self):
        self.frequency_hz = np.ascontiguousarray(self.frequency_hz, dtype=np.float64)
        self.ping_time = np.ascontiguousarray(self.ping_time, dtype=np.int64)
        self.values = np.ascontiguousarray(self.values, dtype=np.float64)
        if self.values.ndim != 3:
            raise ValueError(f"values must be 3-D, got shape {self.values.shape}")
        expected = (len(self.frequency_hz), len(self.ping_time), self.values.shape[2])
        if self.values.shape != expected:
            raise ValueError(f"values shape {self.values.shape} != coords {expected}")
        if np.isnan(self.frequency_hz).any():
            raise ValueError("frequency coordinate carries NaN")
        if len(self.frequency_hz) > 1 and not np.all(np.diff(self.frequency_hz) > 0):
            raise ValueError("frequency coordinate must be strictly increasing")

    @property
    def range_bin(self) -> np.ndarray:
        return np.arange(self.values.shape[2], dtype=np.int64)

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.values.shape

    def frequency_index(self, frequency_hz: float) -> Optional[int]:
        hits = np.nonzero(self.frequency_hz == float(frequency_hz))[0]
        return int(hits[0]) if len(hits) else None


@dataclass(eq=False)
class Mask:
    """Boolean cells over (ping_time, range_bin), shape-matched to a grid."""

    ping_time: np.ndarray
    values: np.ndarray
    attrs: dict = field(default_factory=dict)

    def __post_init__(self):
        self.ping_time = np.ascontiguousarray(self.ping_time, dtype=np.int64)
        self.values = np.ascontiguousarray(self.values, dtype=bool)
        if self.values.shape[0] != len(self.ping_time):
            raise ValueError("mask rows must match ping_time length")


def power_counts_to_db(counts):
    """Received-power counts to dB (linear scale, 10*log10(2)/256 per count)."""
    return np.multiply(counts, POWER_COUNT_DB, dtype=np.float64)


def angle_counts_to_deg(counts):
    """Split-beam angle counts to electrical degrees (180/128 per count)."""
    return np.multiply(counts, ANGLE_COUNT_DEG, dtype=np.float64)


def align_ragged(
    pings: Mapping[float, Sequence[tuple[int, np.ndarray]]]
) -> LabeledGrid:
    """Outer-join ragged per-channel pings onto one padded 3-D grid.

    ``pings`` maps channel frequency to a sequence of (timestamp_ns,
    sample_vector) pairs. The frequency coordinate is the sorted distinct
    frequencies, ping_time the sorted union of all timestamps, and the
    range_bin extent the longest sample vector; everything else is NaN.
    """
    if not pings or any(len(chan) == 0 for chan in pings.values()):
        raise EmptyInput("every channel needs at least one ping")
    freqs = np.array(sorted(pings), dtype=np.float64)
    if len(np.unique(freqs)) != len(freqs):
        raise DuplicateFrequency("channel frequencies must be distinct")

    per_channel_times = {}
    for f, chan in pings.items():
        times = np.array([t for t, _ in chan], dtype=np.int64)
        if len(np.unique(times)) != len(times):
            raise DuplicatePingTime(f"channel at {f} Hz repeats a ping timestamp")
        per_channel_times[f] = times

    all_times = np.unique(np.concatenate(list(per_channel_times.values())))
    n_range = max((len(v) for chan in pings.values() for _, v in chan), default=0)

    values = np.full((len(freqs), len(all_times), n_range), np.nan, dtype=np.float64)
    for fi, f in enumerate(freqs):
        for t, vec in pings[float(f)]:
            ti = int(np.searchsorted(all_times, t))
            if len(vec):
                values[fi, ti, : len(vec)] = vec
    return LabeledGrid(freqs, all_times, values)


def _encounter_order_grid(
    pings: Mapping[float, Sequence[tuple[int, np.ndarray]]],
    event_times: Sequence[int],
    n_range: Optional[int] = None,
) -> LabeledGrid:
    """Like :func:`align_ragged` but with an explicit ping-time order.

    Conversion uses the file-encounter order of ping events so that
    timestamp reversals stay visible to quality control; a sorted
    coordinate would silently reorder them away. ``n_range`` pins the
    grid extent when the vectors alone cannot (power-less pings still
    declare a sample count that sizes the angle grids).
    """
    freqs = np.array(sorted(pings), dtype=np.float64)
    times = np.array(list(event_times), dtype=np.int64)
    index_of = {int(t): i for i, t in enumerate(times)}
    if n_range is None:
        n_range = max((len(v) for chan in pings.values() for _, v in chan), default=0)
    values = np.full((len(freqs), len(times), n_range), np.nan, dtype=np.float64)
    for fi, f in enumerate(freqs):
        for t, vec in pings[float(f)]:
            if len(vec):
                values[fi, index_of[int(t)], : len(vec)] = vec
    return LabeledGrid(freqs, times, values)


def grid_to_ragged(values: np.ndarray, sample_count: np.ndarray) -> list[list[Optional[np.ndarray]]]:
    """Recover the ragged source from a padded grid plus per-cell counts.

    ``sample_count[f, t]`` is the ping's vector length, or -1 where the
    channel has no ping at that time (those cells come back as None).
    """
    out = []
    for fi in range(values.shape[0]):
        row: list[Optional[np.ndarray]] = []
        for ti in range(values.shape[1]):
            n = int(sample_count[fi, ti])
            row.append(None if n < 0 else values[fi, ti, :n])
        out.append(row)
    return out


# ---------------------------------------------------------------------------
# the seven-group dataset
# ---------------------------------------------------------------------------

@dataclass(eq=False)
class Variable:
    """One named array with dimension labels and attributes."""

    dims: tuple[str, ...]
    values: np.ndarray
    attrs: dict = field(default_factory=dict)

    def __post_init__(self):
        self.values = np.ascontiguousarray(self.values)
        if self.values.ndim != len(self.dims):
            raise ValueError(f"{len(self.dims)} dims for a {self.values.ndim}-D array")

    def __eq__(self, other) -> bool:
        if not isinstance(other, Variable):
            return NotImplemented
        return (
            self.dims == other.dims
            and self.values.dtype == other.values.dtype
            and self.values.shape == other.values.shape
            and self.values.tobytes() == other.values.tobytes()   # NaN-safe, bitwise
            and self.attrs == other.attrs
        )


@dataclass(eq=False)
class Group:
    """A named bundle of variables plus group-level attributes."""

    arrays: dict[str, Variable] = field(default_factory=dict)
    attrs: dict = field(default_factory=dict)

    def __eq__(self, other) -> bool:
        if not isinstance(other, Group):
            return NotImplemented
        return self.arrays == other.arrays and self.attrs == other.attrs


@dataclass(eq=False)
class EchoData:
    """Standardized dataset: exactly seven named groups."""

    groups: dict[str, Group]

    def __post_init__(self):
        if tuple(self.groups) != GROUP_NAMES:
            raise ValueError(f"groups must be exactly {GROUP_NAMES}, got {tuple(self.groups)}")

    def __eq__(self, other) -> bool:
        if not isinstance(other, EchoData):
            return NotImplemented
        return self.groups == other.groups

    @property
    def top_level(self) -> Group:
        return self.groups["Top_level"]

    @property
    def environment(self) -> Group:
        return self.groups["Environment"]

    @property
    def platform(self) -> Group:
        return self.groups["Platform"]

    @property
    def provenance(self) -> Group:
        return self.groups["Provenance"]

    @property
    def sonar(self) -> Group:
        return self.groups["Sonar"]

    @property
    def beam(self) -> Group:
        return self.groups["Beam"]

    @property
    def vendor(self) -> Group:
        return self.groups["Vendor"]

    def beam_grid(self, name: str = "backscatter_r") -> LabeledGrid:
        beam = self.beam
        return LabeledGrid(
            beam.arrays["frequency"].values,
            beam.arrays["ping_time"].values,
            beam.arrays[name].values,
        )


def _first_value_per_channel(
    by_freq: dict[float, list[tuple[int, PingRecord]]], attr: str, what: str
) -> np.ndarray:
    """First ping's value per channel; warn when later pings disagree."""
    out = np.empty(len(by_freq))
    for i, f in enumerate(sorted(by_freq)):
        recs = [r for _, r in by_freq[f]]
        first = getattr(recs[0], attr)
        out[i] = first
        scale = max(abs(first), 1e-30)
        if any(abs(getattr(r, attr) - first) / scale > 1e-6 for r in recs[1:]):
            warnings.warn(
                f"{what} varies across pings of the {f:.0f} Hz channel; "
                "keeping the first ping's value",
                DataConsistencyWarning,
                stacklevel=3,
            )
    return out


def build_echodata(
    config: SonarConfig,
    pings: Sequence[tuple[int, PingRecord]],
    nmea: Sequence[tuple[int, NmeaSentence]] = (),
    source_meta: Optional[dict] = None,
) -> EchoData:
    """Assemble the seven-group dataset from parsed records.

    Beam backscatter is the ragged-aligned grid converted from counts to
    dB; environment values come from each channel's first ping; platform
    position comes from checksum-valid NMEA fixes.
    """
    if not pings:
        raise NoPings("cannot build a dataset without sample records")
    meta = dict(source_meta or {})

    by_freq: dict[float, list[tuple[int, PingRecord]]] = {}
    freq_of_channel: dict[int, float] = {}
    event_times: list[int] = []            # distinct stamps in file order
    seen_times: set[int] = set()
    for ts, rec in pings:
        if not 1 <= rec.channel <= config.transducer_count:
            raise ChannelWithoutConfig(
                f"ping channel {rec.channel} outside 1..{config.transducer_count}"
            )
        f = config.transducers[rec.channel - 1].frequency_hz
        freq_of_channel.setdefault(rec.channel, f)
        by_freq.setdefault(f, []).append((ts, rec))
        if ts not in seen_times:
            seen_times.add(ts)
            event_times.append(ts)
    if len(by_freq) != len(freq_of_channel):
        raise DuplicateFrequency("two configured channels share one frequency")
    for f, chan in by_freq.items():
        if len({t for t, _ in chan}) != len(chan):
            raise DuplicatePingTime(f"channel at {f} Hz repeats a ping timestamp")

    # the grid extent is the largest declared sample count, which also
    # sizes the angle grids when a ping carries no power vector
    max_count = max(rec.sample_count for _, rec in pings)
    counts_grid = _encounter_order_grid(
        {f: [(ts, r.power_counts) for ts, r in chan] for f, chan in by_freq.items()},
        event_times,
        n_range=max_count,
    )
    freqs = counts_grid.frequency_hz
    times = counts_grid.ping_time
    n_f, n_t, n_r = counts_grid.shape

    backscatter_db = power_counts_to_db(counts_grid.values)

    any_angles = any(r.mode & MODE_ANGLE for _, r in pings)
    if any_angles:
        along = _encounter_order_grid(
            {f: [(ts, r.angle_counts[:, 0]) for ts, r in chan] for f, chan in by_freq.items()},
            event_times,
            n_range=max_count,
        )
        athwart = _encounter_order_grid(
            {f: [(ts, r.angle_counts[:, 1]) for ts, r in chan] for f, chan in by_freq.items()},
            event_times,
            n_range=max_count,
        )
        angle_along = angle_counts_to_deg(along.values)
        angle_athwart = angle_counts_to_deg(athwart.values)

    # per-(frequency, ping_time) settings; -1 / NaN mark missing pings
    def _grid2(dtype, fill):
        return np.full((n_f, n_t), fill, dtype=dtype)

    transmit_power = _grid2(np.float64, np.nan)
    pulse_length = _grid2(np.float64, np.nan)
    sample_interval = _grid2(np.float64, np.nan)
    bandwidth = _grid2(np.float64, np.nan)
    transducer_depth = _grid2(np.float64, np.nan)
    sample_offset = _grid2(np.int64, -1)
    sample_count = _grid2(np.int64, -1)
    mode = _grid2(np.int8, -1)

    heave = np.full(n_t, np.nan)
    roll = np.full(n_t, np.nan)
    pitch = np.full(n_t, np.nan)

    time_index = {int(t): i for i, t in enumerate(times)}
    for f, chan in by_freq.items():
        fi = int(np.searchsorted(freqs, f))
        for ts, rec in chan:
            ti = time_index[int(ts)]
            transmit_power[fi, ti] = rec.transmit_power_w
            pulse_length[fi, ti] = rec.pulse_length_s
            sample_interval[fi, ti] = rec.sample_interval_s
            bandwidth[fi, ti] = rec.bandwidth_hz
            transducer_depth[fi, ti] = rec.transducer_depth_m
            sample_offset[fi, ti] = rec.sample_offset
            sample_count[fi, ti] = rec.sample_count
            mode[fi, ti] = rec.mode
            if np.isnan(heave[ti]):          # platform attitude: first channel wins
                heave[ti] = rec.heave_m
                roll[ti] = rec.roll_deg
                pitch[ti] = rec.pitch_deg

    # platform position from checksum-valid fixes
    from .convert import parse_position   # late import: convert builds on model

    loc_times, lats, lons, sources = [], [], [], []
    dropped_checksum = 0
    for ts, sentence in nmea:
        if not sentence.checksum_valid:
            dropped_checksum += 1
            continue
        fix = parse_position(sentence)
        if fix is None:
            continue
        loc_times.append(ts)
        lats.append(fix[0])
        lons.append(fix[1])
        sources.append(sentence.talker_and_type)
    order = np.argsort(np.array(loc_times, dtype=np.int64), kind="stable")
    loc_times = np.array(loc_times, dtype=np.int64)[order]
    lats = np.array(lats, dtype=np.float64)[order]
    lons = np.array(lons, dtype=np.float64)[order]
    sources = [sources[i] for i in order]

    time_attrs = {"units": TIME_UNITS}
    freq_var = Variable(("frequency",), freqs, {"units": "Hz"})

    environment = Group(
        arrays={
            "frequency": Variable(("frequency",), freqs.copy(), {"units": "Hz"}),
            "sound_velocity_m_s": Variable(
                ("frequency",),
                _first_value_per_channel(by_freq, "sound_velocity_m_s", "sound velocity"),
            ),
            "absorption_db_m": Variable(
                ("frequency",),
                _first_value_per_channel(by_freq, "absorption_db_m", "absorption"),
            ),
            "temperature_c": Variable(
                ("frequency",),
                _first_value_per_channel(by_freq, "temperature_c", "temperature"),
            ),
        }
    )

    platform = Group(
        arrays={
            "location_time": Variable(("location_time",), loc_times, dict(time_attrs)),
            "latitude_deg": Variable(("location_time",), lats),
            "longitude_deg": Variable(("location_time",), lons),
            "ping_time": Variable(("ping_time",), times.copy(), dict(time_attrs)),
            "heave_m": Variable(("ping_time",), heave),
            "roll_deg": Variable(("ping_time",), roll),
            "pitch_deg": Variable(("ping_time",), pitch),
        },
        attrs={"position_source": sources},
    )

    provenance = Group(
        attrs={
            "source_files": meta.get("source_files", []),
            "software_name": "echograin",
            "software_version": __version__,
            "conversion_time": meta.get("conversion_time", ""),
            "unknown_datagrams": meta.get("unknown_datagrams", {}),
            "invalid_checksum_dropped": dropped_checksum,
            "extra_configurations": meta.get("extra_configurations", 0),
        }
    )

    sonar_freqs = np.array([t.frequency_hz for t in config.transducers])
    def _chan(attr):
        return np.array([getattr(t, attr) for t in config.transducers])
    def _table(attr):
        return np.array([getattr(t, attr) for t in config.transducers])

    sonar = Group(
        arrays={
            "channel": Variable(("channel",), np.arange(1, config.transducer_count + 1)),
            "frequency_hz": Variable(("channel",), sonar_freqs, {"units": "Hz"}),
            "gain_db": Variable(("channel",), _chan("gain_db"), {"units": "dB"}),
            "equivalent_beam_angle_db": Variable(
                ("channel",), _chan("equivalent_beam_angle_db"), {"units": "dB re 1 sr"}
            ),
            "beamwidth_alongship_deg": Variable(("channel",), _chan("beamwidth_alongship_deg")),
            "beamwidth_athwartship_deg": Variable(("channel",), _chan("beamwidth_athwartship_deg")),
            "angle_sensitivity_alongship": Variable(("channel",), _chan("angle_sensitivity_alongship")),
            "angle_sensitivity_athwartship": Variable(("channel",), _chan("angle_sensitivity_athwartship")),
            "pulse_length_table_s": Variable(("channel", "table_entry"), _table("pulse_length_table_s")),
            "gain_table_db": Variable(("channel", "table_entry"), _table("gain_table_db")),
            "sa_correction_table_db": Variable(("channel", "table_entry"), _table("sa_correction_table_db")),
        },
        attrs={
            "sonar_model": config.sounder_name,
            "survey_name": config.survey_name,
            "transect_name": config.transect_name,
            "sounder_version": config.version,
            "channel_ids": [t.channel_id for t in config.transducers],
        },
    )

    beam_arrays = {
        "frequency": freq_var,
        "ping_time": Variable(("ping_time",), times, dict(time_attrs)),
        "range_bin": Variable(("range_bin",), counts_grid.range_bin),
        "backscatter_r": Variable(GRID_DIMS, backscatter_db, {"units": "dB"}),
        "transmit_power_w": Variable(("frequency", "ping_time"), transmit_power, {"units": "W"}),
        "pulse_length_s": Variable(("frequency", "ping_time"), pulse_length, {"units": "s"}),
        "sample_interval_s": Variable(("frequency", "ping_time"), sample_interval, {"units": "s"}),
        "bandwidth_hz": Variable(("frequency", "ping_time"), bandwidth, {"units": "Hz"}),
        "transducer_depth_m": Variable(("frequency", "ping_time"), transducer_depth, {"units": "m"}),
        "sample_offset": Variable(("frequency", "ping_time"), sample_offset),
        "sample_count": Variable(
            ("frequency", "ping_time"), sample_count, {"missing": "-1 marks an absent ping"}
        ),
    }
    if any_angles:
        beam_arrays["angle_alongship_deg"] = Variable(GRID_DIMS, angle_along, {"units": "deg"})
        beam_arrays["angle_athwartship_deg"] = Variable(GRID_DIMS, angle_athwart, {"units": "deg"})

    vendor = Group(
        arrays={"mode": Variable(("frequency", "ping_time"), mode)},
        attrs={"raw0_extra_bytes_total": int(sum(len(r.extra) for _, r in pings))},
    )

    groups = {
        "Top_level": Group(
            attrs={
                "conventions": "echograin-1.0",
                "title": config.survey_name or "Converted echosounder data",
            }
        ),
        "Environment": environment,
        "Platform": platform,
        "Provenance": provenance,
        "Sonar": sonar,
        "Beam": Group(arrays=beam_arrays),
        "Vendor": vendor,
    }
    return EchoData(groups=groups)

"""Calibration of raw received power to Sv and TS with a range coordinate.

The narrowband forms are::

    Sv(f, t, k) = P_r + 20*log10(r_k) + 2*alpha*r_k - C_sv(f)
    TS(f, t, k) = P_r + 40*log10(r_k) + 2*alpha*r_k - C_ts(f)

with offsets::

    C_sv = 10*log10(P_t * g0^2 * lambda^2 * c * tau * psi / (32*pi^2)) + 2*S_a
    C_ts = 10*log10(P_t * g0^2 * lambda^2 / (16*pi^2))

where g0 = 10^(G/10) and psi = 10^(EBA/10) are the linear gain and
equivalent beam angle. Range uses the sample-center convention
r_k = (offset + k + 0.5) * c * dt / 2, which keeps r_0 > 0.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import (
    CalibrationWarning,
    DataConsistencyWarning,
    MissingCalParams,
    NonPositive,
)
from .model import EchoData, LabeledGrid

# Relative pulse-length mismatch beyond which the table lookup warns.
PULSE_TABLE_TOLERANCE = 1e-3


@dataclass
class CalParams:
    """Scalar calibration constants for one frequency channel."""

    frequency_hz: float
    gain_db: float
    equivalent_beam_angle_db: float
    sa_correction_db: float
    transmit_power_w: float
    pulse_length_s: float
    sound_speed_m_s: float
    absorption_db_m: float
    sample_interval_s: float
    sample_offset: int = 0

    def __post_init__(self):
        for name in (
            "frequency_hz", "transmit_power_w", "pulse_length_s",
            "sound_speed_m_s", "sample_interval_s",
        ):
            if not getattr(self, name) > 0:
                raise NonPositive(f"{name} must be > 0, got {getattr(self, name)}")
        if self.absorption_db_m < 0:
            raise NonPositive(f"absorption_db_m must be >= 0, got {self.absorption_db_m}")

    @property
    def wavelength_m(self) -> float:
        return self.sound_speed_m_s / self.frequency_hz


@dataclass(eq=False)
class SvGrid(LabeledGrid):
    """Calibrated grid plus a per-frequency range coordinate in meters."""

    range_m: np.ndarray = None

    def __post_init__(self):
        super().__post_init__()
        if self.range_m is None:
            raise ValueError("SvGrid needs a range_m coordinate")
        self.range_m = np.ascontiguousarray(self.range_m, dtype=np.float64)
        if self.range_m.shape != (self.shape[0], self.shape[2]):
            raise ValueError(
                f"range_m shape {self.range_m.shape} != (frequency, range_bin) "
                f"({self.shape[0]}, {self.shape[2]})"
            )


def compute_range(
    sample_interval_s: float,
    sound_speed_m_s: float,
    n: int,
    offset: int = 0,
) -> np.ndarray:
    """Sample-center ranges r_k = (offset + k + 0.5) * c * dt / 2."""
    if sample_interval_s <= 0:
        raise NonPositive(f"sample interval must be > 0, got {sample_interval_s}")
    if sound_speed_m_s <= 0:
        raise NonPositive(f"sound speed must be > 0, got {sound_speed_m_s}")
    if n < 0:
        raise NonPositive(f"sample count must be >= 0, got {n}")
    if offset < 0:
        raise NonPositive(f"sample offset must be >= 0, got {offset}")
    k = np.arange(n, dtype=np.float64)
    return (offset + k + 0.5) * (sound_speed_m_s * sample_interval_s / 2.0)


def sv_offset_db(p: CalParams) -> float:
    """Sv calibration offset C_sv in dB."""
    g0 = 10.0 ** (p.gain_db / 10.0)
    psi = 10.0 ** (p.equivalent_beam_angle_db / 10.0)
    return 10.0 * math.log10(
        p.transmit_power_w
        * g0**2
        * p.wavelength_m**2
        * p.sound_speed_m_s
        * p.pulse_length_s
        * psi
        / (32.0 * math.pi**2)
    ) + 2.0 * p.sa_correction_db


def ts_offset_db(p: CalParams) -> float:
    """TS calibration offset C_ts in dB."""
    g0 = 10.0 ** (p.gain_db / 10.0)
    return 10.0 * math.log10(
        p.transmit_power_w * g0**2 * p.wavelength_m**2 / (16.0 * math.pi**2)
    )


def _first_present(values: np.ndarray, present: np.ndarray, what: str, freq: float):
    """First value of a per-ping setting; warn when later pings differ."""
    idx = np.nonzero(present)[0]
    if len(idx) == 0:
        raise MissingCalParams(f"no pings carry {what} for the {freq:.0f} Hz channel")
    first = values[idx[0]]
    rest = values[idx[1:]]
    scale = max(abs(float(first)), 1e-30)
    if len(rest) and np.max(np.abs(rest - first)) / scale > 1e-9:
        warnings.warn(
            f"{what} varies across pings of the {freq:.0f} Hz channel; "
            "calibration uses the first ping's value",
            DataConsistencyWarning,
            stacklevel=3,
        )
    return first


def resolve_cal_params(
    ed: EchoData, overrides: Optional[dict] = None
) -> dict[float, CalParams]:
    """Build per-frequency calibration constants from a dataset.

    Gain and S_a come from the configuration tables at the entry whose
    pulse length is nearest the channel's; precedence for environment
    values is explicit overrides, then the Environment group.
    """
    overrides = overrides or {}
    sonar = ed.sonar
    env = ed.environment
    beam = ed.beam

    freqs = beam.arrays["frequency"].values
    sonar_freqs = sonar.arrays["frequency_hz"].values
    env_freqs = env.arrays["frequency"].values
    present = ed.beam.arrays["sample_count"].values >= 0

    params: dict[float, CalParams] = {}
    for fi, f in enumerate(freqs):
        f = float(f)
        hits = np.nonzero(sonar_freqs == f)[0]
        if len(hits) == 0:
            raise MissingCalParams(f"no configured channel at {f:.0f} Hz")
        ci = int(hits[0])

        over = _override_for(overrides, f)
        pulse = float(
            _first_present(beam.arrays["pulse_length_s"].values[fi], present[fi],
                           "pulse length", f)
        )
        table = sonar.arrays["pulse_length_table_s"].values[ci]
        entry = int(np.argmin(np.abs(table - pulse)))
        if abs(table[entry] - pulse) / pulse > PULSE_TABLE_TOLERANCE:
            warnings.warn(
                f"pulse length {pulse:.6g} s not in the table for the {f:.0f} Hz "
                f"channel; using nearest entry {table[entry]:.6g} s",
                CalibrationWarning,
                stacklevel=2,
            )

        ei = int(np.nonzero(env_freqs == f)[0][0])
        sound_speed = float(over.get(
            "sound_speed_m_s", env.arrays["sound_velocity_m_s"].values[ei]
        ))
        absorption = float(over.get(
            "absorption_db_m", env.arrays["absorption_db_m"].values[ei]
        ))

        params[f] = CalParams(
            frequency_hz=f,
            gain_db=float(over.get("gain_db", sonar.arrays["gain_table_db"].values[ci, entry])),
            equivalent_beam_angle_db=float(over.get(
                "equivalent_beam_angle_db",
                sonar.arrays["equivalent_beam_angle_db"].values[ci],
            )),
            sa_correction_db=float(over.get(
                "sa_correction_db",
                sonar.arrays["sa_correction_table_db"].values[ci, entry],
            )),
            transmit_power_w=float(
                _first_present(beam.arrays["transmit_power_w"].values[fi], present[fi],
                               "transmit power", f)
            ),
            pulse_length_s=pulse,
            sound_speed_m_s=sound_speed,
            absorption_db_m=absorption,
            sample_interval_s=float(
                _first_present(beam.arrays["sample_interval_s"].values[fi], present[fi],
                               "sample interval", f)
            ),
            sample_offset=int(
                _first_present(beam.arrays["sample_offset"].values[fi], present[fi],
                               "sample offset", f)
            ),
        )
    return params


def _override_for(overrides: dict, frequency_hz: float) -> dict:
    for key, value in overrides.items():
        if float(key) == frequency_hz:
            return value
    return {}


def _ping_blocks(n_pings: int, partitions: int) -> list[slice]:
    partitions = max(1, min(partitions, max(1, n_pings)))
    edges = np.linspace(0, n_pings, partitions + 1).astype(int)
    return [slice(int(a), int(b)) for a, b in zip(edges[:-1], edges[1:])]


def _calibrated_grid(
    ed: EchoData,
    overrides: Optional[dict],
    spreading_db_per_decade: float,
    offset_fn,
    partitions: int,
) -> SvGrid:
    params = resolve_cal_params(ed, overrides)
    grid = ed.beam_grid()
    n_f, n_t, n_r = grid.shape
    ranges = np.empty((n_f, n_r))
    out = np.empty_like(grid.values)

    for fi, f in enumerate(grid.frequency_hz):
        p = params[float(f)]
        r = compute_range(p.sample_interval_s, p.sound_speed_m_s, n_r, p.sample_offset)
        ranges[fi] = r
        with np.errstate(divide="ignore"):
            gain_vs_range = (
                spreading_db_per_decade * np.log10(r)
                + 2.0 * p.absorption_db_m * r
                - offset_fn(p)
            )
        for block in _ping_blocks(n_t, partitions):
            out[fi, block, :] = grid.values[fi, block, :] + gain_vs_range[None, :]

    return SvGrid(
        frequency_hz=grid.frequency_hz,
        ping_time=grid.ping_time,
        values=out,
        range_m=ranges,
    )


def compute_sv(
    ed: EchoData, overrides: Optional[dict] = None, partitions: int = 1
) -> SvGrid:
    """Calibrate received power to volume backscattering strength (dB re 1/m).

    NaN cells stay NaN. ``partitions`` splits the work over ping blocks;
    the result is bit-identical for any partition count.
    """
    return _calibrated_grid(ed, overrides, 20.0, sv_offset_db, partitions)


def compute_ts(
    ed: EchoData, overrides: Optional[dict] = None, partitions: int = 1
) -> SvGrid:
    """Calibrate received power to point backscattering strength (dB re 1 m^2)."""
    return _calibrated_grid(ed, overrides, 40.0, ts_offset_db, partitions)

"""Ping-by-ping vertical-distribution statistics over calibrated Sv.

With s_v = 10^(Sv/10) and dz the (uniform) per-channel range spacing,
each ping's finite cells yield::

    s_a      = sum(s_v * dz)                       area backscattering coefficient
    NASC     = 4 * pi * 1852^2 * s_a               nautical-area scaling
    CM       = sum(z * s_v * dz) / s_a             center of mass
    Inertia  = sum((z - CM)^2 * s_v * dz) / s_a
    EA       = s_a^2 / sum(s_v^2 * dz)             equivalent area
    IA       = 1 / EA                              aggregation index

Pings with no finite cell leave every statistic undefined; undefined
values serialize as empty CSV fields, never as zeros.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .calibrate import SvGrid
from .errors import IoFailure

NASC_SCALE = 4.0 * math.pi * 1852.0**2

CSV_HEADER = (
    "ping_time,frequency_hz,sa,nasc,center_of_mass_m,inertia_m2,"
    "equivalent_area_m,aggregation_per_m"
)


@dataclass
class MetricsRow:
    """Summary statistics for one (frequency, ping) pair; None = undefined."""

    ping_time_ns: int
    frequency_hz: float
    sa: Optional[float]
    nasc: Optional[float]
    center_of_mass_m: Optional[float]
    inertia_m2: Optional[float]
    equivalent_area_m: Optional[float]
    aggregation_per_m: Optional[float]


def compute_metrics(sv: SvGrid) -> list[MetricsRow]:
    """One row per (frequency, ping), in (frequency, ping_time) order."""
    rows: list[MetricsRow] = []
    n_f, n_t, n_r = sv.shape
    for fi in range(n_f):
        f = float(sv.frequency_hz[fi])
        z = sv.range_m[fi]
        dz = float(z[1] - z[0]) if n_r >= 2 else math.nan
        lin = np.power(10.0, sv.values[fi] / 10.0)
        finite = np.isfinite(sv.values[fi])
        w = np.where(finite, lin, 0.0)

        sum_w = w.sum(axis=1) * dz                       # s_a per ping
        sum_wz = (w * z).sum(axis=1) * dz
        sum_w2 = (w * w).sum(axis=1) * dz
        defined = finite.any(axis=1) & np.isfinite(dz)

        with np.errstate(invalid="ignore", divide="ignore"):
            cm = sum_wz / sum_w
            inertia = (w * (z - cm[:, None]) ** 2).sum(axis=1) * dz / sum_w
            ea = sum_w**2 / sum_w2
            ia = 1.0 / ea

        for ti in range(n_t):
            if defined[ti]:
                rows.append(
                    MetricsRow(
                        ping_time_ns=int(sv.ping_time[ti]),
                        frequency_hz=f,
                        sa=float(sum_w[ti]),
                        nasc=float(sum_w[ti] * NASC_SCALE),
                        center_of_mass_m=float(cm[ti]),
                        inertia_m2=float(inertia[ti]),
                        equivalent_area_m=float(ea[ti]),
                        aggregation_per_m=float(ia[ti]),
                    )
                )
            else:
                rows.append(
                    MetricsRow(
                        ping_time_ns=int(sv.ping_time[ti]),
                        frequency_hz=f,
                        sa=None, nasc=None, center_of_mass_m=None,
                        inertia_m2=None, equivalent_area_m=None,
                        aggregation_per_m=None,
                    )
                )
    return rows


def iso_ns(timestamp_ns: int) -> str:
    """ISO 8601 UTC with nanosecond digits, e.g. 2017-06-01T00:00:00.000000000Z."""
    secs, ns = divmod(int(timestamp_ns), 10**9)
    stamp = datetime.fromtimestamp(secs, tz=timezone.utc)
    return stamp.strftime("%Y-%m-%dT%H:%M:%S") + f".{ns:09d}Z"


def _fmt(value: Optional[float]) -> str:
    return "" if value is None else f"{value:.9g}"


def write_metrics_csv(rows: Sequence[MetricsRow], path) -> None:
    """Write rows sorted by (frequency, ping_time); floats at 9 significant digits."""
    ordered = sorted(rows, key=lambda r: (r.frequency_hz, r.ping_time_ns))
    try:
        with open(Path(path), "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(CSV_HEADER.split(","))
            for r in ordered:
                writer.writerow(
                    [
                        iso_ns(r.ping_time_ns),
                        f"{r.frequency_hz:.9g}",
                        _fmt(r.sa),
                        _fmt(r.nasc),
                        _fmt(r.center_of_mass_m),
                        _fmt(r.inertia_m2),
                        _fmt(r.equivalent_area_m),
                        _fmt(r.aggregation_per_m),
                    ]
                )
    except OSError as exc:
        raise IoFailure(f"cannot write {path}: {exc}") from exc

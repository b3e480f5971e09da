"""Quality control and preprocessing over calibrated grids.

Timestamp repair nudges small reversals forward; MVBS averages Sv in the
linear domain over ping-time and physical-range bins; frequency
differencing thresholds the Sv difference between two channels.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .calibrate import SvGrid
from .errors import EmptyInput, FrequencyNotFound, GridMismatch, InvalidParams
from .model import Mask

DEFAULT_REVERSAL_WINDOW_S = 60.0
DEFAULT_REVERSAL_EPSILON_S = 0.001


@dataclass
class TimeRepairReport:
    """Outcome of one repair pass over a timestamp vector."""

    fixed: list[int] = field(default_factory=list)
    original_ns: list[int] = field(default_factory=list)
    repaired_ns: list[int] = field(default_factory=list)
    unfixable: list[int] = field(default_factory=list)

    def to_dict(self, window_s: float, epsilon_s: float) -> dict:
        return {
            "fixed": list(self.fixed),
            "unfixable": list(self.unfixable),
            "window_s": window_s,
            "epsilon_s": epsilon_s,
        }


def repair_time_reversals(
    times_ns,
    window_s: float = DEFAULT_REVERSAL_WINDOW_S,
    epsilon_s: float = DEFAULT_REVERSAL_EPSILON_S,
) -> tuple[np.ndarray, TimeRepairReport]:
    """Nudge small backwards jumps in a timestamp vector.

    Scanning left to right: whenever t[i] <= t'[i-1] and the reversal is
    smaller than ``window_s``, t'[i] becomes t'[i-1] + ``epsilon_s``;
    larger reversals stay untouched and are reported unfixable. The
    output is strictly increasing exactly when nothing was unfixable.
    Applying the repair twice changes nothing further.
    """
    times = np.ascontiguousarray(times_ns, dtype=np.int64)
    if times.size == 0:
        raise EmptyInput("cannot repair an empty timestamp vector")
    if window_s <= 0 or epsilon_s <= 0:
        raise InvalidParams("window_s and epsilon_s must be > 0")
    window_ns = round(window_s * 1e9)
    epsilon_ns = round(epsilon_s * 1e9)

    out = times.copy()
    report = TimeRepairReport()
    for i in range(1, len(out)):
        prev = out[i - 1]
        t = times[i]
        if t > prev:
            continue
        if prev - t < window_ns:
            out[i] = prev + epsilon_ns
            report.fixed.append(i)
            report.original_ns.append(int(t))
            report.repaired_ns.append(int(out[i]))
        else:
            report.unfixable.append(i)
    return out, report


@dataclass
class MvbsParams:
    """Bin sizes for MVBS: physical range meters plus one ping-bin mode."""

    range_bin_size_m: float
    ping_seconds: Optional[float] = None
    ping_count: Optional[int] = None

    def __post_init__(self):
        if self.range_bin_size_m <= 0:
            raise InvalidParams(f"range_bin_size_m must be > 0, got {self.range_bin_size_m}")
        modes = (self.ping_seconds is not None) + (self.ping_count is not None)
        if modes != 1:
            raise InvalidParams("exactly one of ping_seconds / ping_count must be set")
        if self.ping_seconds is not None and self.ping_seconds <= 0:
            raise InvalidParams(f"ping_seconds must be > 0, got {self.ping_seconds}")
        if self.ping_count is not None and self.ping_count < 1:
            raise InvalidParams(f"ping_count must be >= 1, got {self.ping_count}")


def _ping_bins(ping_time: np.ndarray, p: MvbsParams) -> tuple[list[slice], np.ndarray]:
    """Contiguous ping runs per output bin and the bin-start labels."""
    n = len(ping_time)
    if p.ping_count is not None:
        starts = np.arange(0, n, p.ping_count)
        slices = [slice(int(a), int(min(a + p.ping_count, n))) for a in starts]
        labels = ping_time[starts]
    else:
        width_ns = round(p.ping_seconds * 1e9)
        rel = ping_time - ping_time[0]
        bin_of = rel // width_ns
        # occupied bins only; pings are non-decreasing so runs are contiguous
        edges = np.nonzero(np.r_[True, bin_of[1:] != bin_of[:-1]])[0]
        slices = [
            slice(int(a), int(b))
            for a, b in zip(edges, np.r_[edges[1:], n])
        ]
        labels = ping_time[0] + bin_of[edges] * width_ns
    return slices, np.asarray(labels, dtype=np.int64)


def compute_mvbs(sv: SvGrid, p: MvbsParams, partitions: int = 1) -> SvGrid:
    """Bin-average Sv in the linear domain over ping and range bins.

    Ping bins anchor at the first ping (duration mode) or group fixed
    ping counts; range bins are multiples of ``range_bin_size_m``
    anchored at zero so channels with different sample spacings land on
    one common grid. Labels are interval starts. Bins with no finite
    member are NaN. The result is bit-identical for any ``partitions``.
    """
    if sv.shape[1] == 0:
        raise InvalidParams("MVBS needs at least one ping")
    n_f, n_t, n_r = sv.shape

    ping_slices, ping_labels = _ping_bins(sv.ping_time, p)

    range_bin_of = [
        (sv.range_m[fi] / p.range_bin_size_m).astype(np.int64) if n_r else
        np.empty(0, np.int64)
        for fi in range(n_f)
    ]
    if n_r:
        lo = min(int(b[0]) for b in range_bin_of)
        hi = max(int(b[-1]) for b in range_bin_of)
    else:
        lo, hi = 0, -1
    n_rb = hi - lo + 1
    range_starts = (lo + np.arange(n_rb, dtype=np.float64)) * p.range_bin_size_m

    lin = np.power(10.0, sv.values / 10.0)
    finite = np.isfinite(sv.values)
    lin = np.where(finite, lin, 0.0)

    # per frequency: column indices of each output range bin
    range_slices: list[list[slice]] = []
    for fi in range(n_f):
        bins = range_bin_of[fi]
        cols = []
        for rb in range(lo, hi + 1):
            a = int(np.searchsorted(bins, rb, side="left"))
            b = int(np.searchsorted(bins, rb, side="right"))
            cols.append(slice(a, b))
        range_slices.append(cols)

    out = np.full((n_f, len(ping_slices), n_rb), np.nan)
    partitions = max(1, partitions)
    block_edges = np.linspace(0, len(ping_slices), min(partitions, max(1, len(ping_slices))) + 1)
    block_edges = block_edges.astype(int)

    for ba, bb in zip(block_edges[:-1], block_edges[1:]):
        for pb in range(int(ba), int(bb)):
            rows = ping_slices[pb]
            for fi in range(n_f):
                sub = lin[fi, rows, :]
                cnt_rows = finite[fi, rows, :]
                for rb in range(n_rb):
                    cols = range_slices[fi][rb]
                    if cols.start == cols.stop:
                        continue
                    total = sub[:, cols].sum()
                    count = int(cnt_rows[:, cols].sum())
                    if count:
                        out[fi, pb, rb] = 10.0 * np.log10(total / count)

    return SvGrid(
        frequency_hz=sv.frequency_hz.copy(),
        ping_time=ping_labels,
        values=out,
        range_m=np.broadcast_to(range_starts, (n_f, n_rb)).copy(),
    )


def frequency_diff_mask(
    sv: SvGrid,
    freq_a_hz: float,
    freq_b_hz: float,
    d_min_db: float,
    d_max_db: float,
) -> Mask:
    """Cells where d_min <= Sv(f_a) - Sv(f_b) <= d_max; NaN operands are False.

    Both channels must share ping-time and range coordinates; run after
    MVBS when raw grids differ (no implicit regridding).
    """
    ia = sv.frequency_index(freq_a_hz)
    ib = sv.frequency_index(freq_b_hz)
    if ia is None:
        raise FrequencyNotFound(f"{freq_a_hz:.0f} Hz not in the grid")
    if ib is None:
        raise FrequencyNotFound(f"{freq_b_hz:.0f} Hz not in the grid")
    if not np.array_equal(sv.range_m[ia], sv.range_m[ib]):
        raise GridMismatch(
            "channels have different range coordinates; compute MVBS first"
        )
    diff = sv.values[ia] - sv.values[ib]
    with np.errstate(invalid="ignore"):
        values = (diff >= d_min_db) & (diff <= d_max_db)
    return Mask(
        ping_time=sv.ping_time.copy(),
        values=values,
        attrs={
            "frequency_a_hz": float(freq_a_hz),
            "frequency_b_hz": float(freq_b_hz),
            "d_min_db": float(d_min_db),
            "d_max_db": float(d_max_db),
        },
    )

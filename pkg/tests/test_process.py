"""Timestamp repair, linear-domain MVBS, frequency differencing."""

import math

import numpy as np
import pytest

from echograin.calibrate import SvGrid
from echograin.errors import EmptyInput, FrequencyNotFound, GridMismatch, InvalidParams
from echograin.process import (
    MvbsParams,
    compute_mvbs,
    frequency_diff_mask,
    repair_time_reversals,
)
from tests.conftest import random_sv_grid

S = 10**9   # seconds in nanoseconds


# ---------------------------------------------------------------------------
# repair_time_reversals
# ---------------------------------------------------------------------------

def seconds(*values):
    return np.array([round(v * S) for v in values], dtype=np.int64)


def test_repair_single_small_reversal():
    out, report = repair_time_reversals(seconds(0, 10, 9, 12))
    np.testing.assert_array_equal(out, seconds(0, 10, 10.001, 12))
    assert report.fixed == [2]
    assert report.unfixable == []
    assert report.original_ns == [9 * S]
    assert report.repaired_ns == [round(10.001 * S)]


def test_repair_identity_on_increasing_input():
    times = seconds(0, 1, 5, 100)
    out, report = repair_time_reversals(times)
    np.testing.assert_array_equal(out, times)
    assert report.fixed == [] and report.unfixable == []


def test_repair_cascade_through_repaired_values():
    out, report = repair_time_reversals(seconds(0, 10, 9, 9.5, 12))
    np.testing.assert_array_equal(out, seconds(0, 10, 10.001, 10.002, 12))
    assert report.fixed == [2, 3]


def test_repair_large_reversal_left_unchanged():
    times = seconds(0, 100, 10, 101)
    out, report = repair_time_reversals(times)
    np.testing.assert_array_equal(out, times)
    assert report.unfixable == [2]
    assert report.fixed == []


def test_repair_window_boundary_is_strict():
    # 60 s reversal is NOT small (strictly-less-than window)
    out, report = repair_time_reversals(seconds(0, 100, 40, 101))
    assert report.unfixable == [2]
    out, report = repair_time_reversals(seconds(0, 100, 40.001, 101))
    assert report.fixed == [2]


def test_repair_equal_stamp_counts_as_reversal():
    out, report = repair_time_reversals(seconds(0, 10, 10, 12))
    np.testing.assert_array_equal(out, seconds(0, 10, 10.001, 12))
    assert report.fixed == [2]


def test_repair_idempotent():
    times = seconds(0, 10, 9, 9.5, 300, 200, 301)
    once, r1 = repair_time_reversals(times)
    twice, r2 = repair_time_reversals(once)
    np.testing.assert_array_equal(once, twice)
    assert r2.fixed == []
    assert r2.unfixable == r1.unfixable     # the big jump is still there


def test_repair_strictly_increasing_iff_no_unfixable():
    rng = np.random.default_rng(3)
    for _ in range(50):
        base = np.cumsum(rng.integers(1, 5, size=30)) * S
        times = base.copy()
        for idx in rng.choice(np.arange(1, 30), size=3, replace=False):
            times[idx] -= int(rng.uniform(0.5, 200) * S)
        out, report = repair_time_reversals(times)
        if not report.unfixable:
            assert (np.diff(out) > 0).all()
        else:
            assert not (np.diff(out) > 0).all()


def test_repair_changes_only_reported_indices():
    times = seconds(0, 10, 9, 12, 11.5, 20)
    out, report = repair_time_reversals(times)
    touched = np.nonzero(out != times)[0]
    np.testing.assert_array_equal(touched, report.fixed)


def test_repair_empty_vector():
    with pytest.raises(EmptyInput):
        repair_time_reversals(np.array([], dtype=np.int64))


def test_repair_custom_window_and_epsilon():
    # 1 s reversal < 2 s window: fixed with the 0.5 s nudge
    out, report = repair_time_reversals(seconds(0, 5, 4), window_s=2.0, epsilon_s=0.5)
    np.testing.assert_array_equal(out, seconds(0, 5, 5.5))
    assert report.fixed == [2] and report.unfixable == []
    # shrink the window below the reversal: now unfixable
    out, report = repair_time_reversals(seconds(0, 5, 4), window_s=0.8, epsilon_s=0.5)
    np.testing.assert_array_equal(out, seconds(0, 5, 4))
    assert report.unfixable == [2]


# ---------------------------------------------------------------------------
# compute_mvbs
# ---------------------------------------------------------------------------

def grid_from_values(values, spacing=0.5, t_step_s=1.0):
    values = np.asarray(values, dtype=float)
    n_f, n_t, n_r = values.shape
    t0 = 1_000_000_000_000_000_000
    return SvGrid(
        frequency_hz=(np.arange(n_f) + 1) * 1e4,
        ping_time=t0 + np.arange(n_t) * round(t_step_s * S),
        values=values,
        range_m=np.tile((np.arange(n_r) + 0.5) * spacing, (n_f, 1)),
    )


def mvbs_oracle(sv: SvGrid, p: MvbsParams):
    """Brute-force two-loop linear-domain mean."""
    n_f, n_t, n_r = sv.shape
    if p.ping_count is not None:
        starts = list(range(0, n_t, p.ping_count))
        groups = [list(range(a, min(a + p.ping_count, n_t))) for a in starts]
        labels = [int(sv.ping_time[a]) for a in starts]
    else:
        width = round(p.ping_seconds * S)
        bins = [(int(t) - int(sv.ping_time[0])) // width for t in sv.ping_time]
        groups, labels, current = [], [], None
        for ti, b in enumerate(bins):
            if b != current:
                groups.append([])
                labels.append(int(sv.ping_time[0]) + b * width)
                current = b
            groups[-1].append(ti)

    range_bins = [[int(math.floor(r / p.range_bin_size_m)) for r in sv.range_m[fi]]
                  for fi in range(n_f)]
    lo = min(b[0] for b in range_bins) if n_r else 0
    hi = max(b[-1] for b in range_bins) if n_r else -1

    out = np.full((n_f, len(groups), hi - lo + 1), np.nan)
    for fi in range(n_f):
        for gi, members in enumerate(groups):
            for rb in range(lo, hi + 1):
                acc, count = 0.0, 0
                for ti in members:
                    for k in range(n_r):
                        if range_bins[fi][k] != rb:
                            continue
                        v = sv.values[fi, ti, k]
                        if math.isnan(v):
                            continue
                        acc += 10 ** (v / 10)
                        count += 1
                if count:
                    out[fi, gi, rb - lo] = 10 * math.log10(acc / count)
    starts = np.array([(lo + i) * p.range_bin_size_m for i in range(hi - lo + 1)])
    return out, np.array(labels, dtype=np.int64), starts


def test_mvbs_hand_case_two_samples():
    grid = grid_from_values([[[-10.0, -20.0]]], spacing=0.5)
    out = compute_mvbs(grid, MvbsParams(range_bin_size_m=5.0, ping_count=1))
    expected = 10 * math.log10((0.1 + 0.01) / 2)
    assert out.values.shape == (1, 1, 1)
    assert out.values[0, 0, 0] == pytest.approx(expected, abs=1e-12)
    assert out.values[0, 0, 0] == pytest.approx(-12.5964, abs=1e-4)


def test_mvbs_constant_field_invariant():
    c = -43.7
    grid = grid_from_values(np.full((2, 7, 11), c), spacing=0.25)
    for params in (
        MvbsParams(1.0, ping_count=3),
        MvbsParams(0.6, ping_seconds=2.5),
        MvbsParams(100.0, ping_count=7),
    ):
        out = compute_mvbs(grid, params)
        np.testing.assert_allclose(out.values, c, rtol=0, atol=1e-12)


def test_mvbs_identity_binning():
    rng = np.random.default_rng(5)
    values = rng.uniform(-90, -30, size=(2, 6, 10))
    values[0, 2, 3] = np.nan
    spacing = 0.5
    grid = grid_from_values(values, spacing=spacing)
    out = compute_mvbs(grid, MvbsParams(range_bin_size_m=spacing, ping_count=1))
    assert out.shape == grid.shape
    finite = np.isfinite(values)
    np.testing.assert_allclose(
        out.values[finite], values[finite], rtol=0, atol=1e-12
    )
    assert np.isnan(out.values[~finite]).all()


def test_mvbs_matches_brute_force_oracle():
    rng = np.random.default_rng(77)
    for trial in range(30):
        n_f = int(rng.integers(1, 4))
        n_t = int(rng.integers(1, 15))
        n_r = int(rng.integers(1, 25))
        shared = bool(rng.integers(0, 2))
        sv = random_sv_grid(rng, n_f, n_t, n_r, nan_fraction=0.2, shared_range=shared)
        if rng.integers(0, 2):
            params = MvbsParams(float(rng.uniform(0.05, 3.0)),
                                ping_count=int(rng.integers(1, 6)))
        else:
            params = MvbsParams(float(rng.uniform(0.05, 3.0)),
                                ping_seconds=float(rng.uniform(1.0, 10.0)))
        got = compute_mvbs(sv, params)
        want, labels, starts = mvbs_oracle(sv, params)
        np.testing.assert_array_equal(got.ping_time, labels)
        np.testing.assert_allclose(got.range_m[0], starts, rtol=0, atol=1e-12)
        np.testing.assert_allclose(got.values, want, rtol=0, atol=1e-9, equal_nan=True)


def test_mvbs_bounds_property():
    rng = np.random.default_rng(13)
    sv = random_sv_grid(rng, 2, 10, 20, nan_fraction=0.3, shared_range=True)
    params = MvbsParams(1.0, ping_count=4)
    out = compute_mvbs(sv, params)
    # every output cell sits within [min, max] of its group (dB order is
    # preserved by the monotone linear/dB maps)
    want, labels, starts = mvbs_oracle(sv, params)
    for fi in range(out.shape[0]):
        lo_v = np.nanmin(sv.values[fi])
        hi_v = np.nanmax(sv.values[fi])
        cells = out.values[fi][np.isfinite(out.values[fi])]
        assert ((cells >= lo_v - 1e-9) & (cells <= hi_v + 1e-9)).all()


def test_mvbs_partition_invariance():
    rng = np.random.default_rng(19)
    sv = random_sv_grid(rng, 2, 24, 30, nan_fraction=0.15)
    params = MvbsParams(0.8, ping_seconds=4.0)
    base = compute_mvbs(sv, params, partitions=1)
    for parts in (2, 3, 8, 100):
        again = compute_mvbs(sv, params, partitions=parts)
        assert again.values.tobytes() == base.values.tobytes()


def test_mvbs_all_nan_group_is_nan():
    values = np.full((1, 2, 4), np.nan)
    values[0, 0, 0] = -40.0
    grid = grid_from_values(values, spacing=0.5)
    out = compute_mvbs(grid, MvbsParams(range_bin_size_m=1.0, ping_count=2))
    assert np.isfinite(out.values[0, 0, 0])
    assert np.isnan(out.values[0, 0, 1:]).all()


def test_mvbs_invalid_params():
    with pytest.raises(InvalidParams):
        MvbsParams(range_bin_size_m=0.0, ping_count=1)
    with pytest.raises(InvalidParams):
        MvbsParams(range_bin_size_m=1.0)
    with pytest.raises(InvalidParams):
        MvbsParams(range_bin_size_m=1.0, ping_count=2, ping_seconds=3.0)
    with pytest.raises(InvalidParams):
        MvbsParams(range_bin_size_m=1.0, ping_count=0)


# ---------------------------------------------------------------------------
# frequency_diff_mask
# ---------------------------------------------------------------------------

def test_fdiff_equal_grids_zero_bounds_all_true():
    rng = np.random.default_rng(2)
    values = rng.uniform(-80, -40, size=(1, 5, 8))
    sv = grid_from_values(np.concatenate([values, values]), spacing=0.5)
    mask = frequency_diff_mask(sv, sv.frequency_hz[0], sv.frequency_hz[1], 0.0, 0.0)
    assert mask.values.all()


def test_fdiff_out_of_band_all_false():
    base = np.zeros((1, 4, 6)) - 60.0
    sv = grid_from_values(np.concatenate([base + 1.0, base]), spacing=0.5)
    mask = frequency_diff_mask(sv, sv.frequency_hz[0], sv.frequency_hz[1], 2.0, 16.0)
    assert not mask.values.any()


def test_fdiff_matches_brute_force():
    rng = np.random.default_rng(4)
    sv = random_sv_grid(rng, 2, 8, 12, nan_fraction=0.25, shared_range=True)
    f_a, f_b = sv.frequency_hz[1], sv.frequency_hz[0]
    d_min, d_max = -3.0, 5.0
    mask = frequency_diff_mask(sv, f_a, f_b, d_min, d_max)
    for ti in range(sv.shape[1]):
        for k in range(sv.shape[2]):
            a = sv.values[1, ti, k]
            b = sv.values[0, ti, k]
            want = (
                not math.isnan(a) and not math.isnan(b)
                and d_min <= a - b <= d_max
            )
            assert mask.values[ti, k] == want


def test_fdiff_nan_operand_is_false():
    values = np.full((2, 2, 2), -50.0)
    values[0, 0, 0] = np.nan
    sv = grid_from_values(values, spacing=0.5)
    mask = frequency_diff_mask(sv, sv.frequency_hz[0], sv.frequency_hz[1], -1.0, 1.0)
    assert not mask.values[0, 0]
    assert mask.values[1, 1]


def test_fdiff_swapped_complement_identity():
    rng = np.random.default_rng(6)
    sv = random_sv_grid(rng, 3, 6, 9, nan_fraction=0.2, shared_range=True)
    f_a, f_b = sv.frequency_hz[2], sv.frequency_hz[0]
    d_min, d_max = -2.0, 7.0
    mask_ab = frequency_diff_mask(sv, f_a, f_b, d_min, d_max)
    mask_ba = frequency_diff_mask(sv, f_b, f_a, -d_max, -d_min)
    np.testing.assert_array_equal(mask_ab.values, mask_ba.values)


def test_fdiff_frequency_not_found():
    rng = np.random.default_rng(7)
    sv = random_sv_grid(rng, 2, 3, 4, shared_range=True)
    with pytest.raises(FrequencyNotFound):
        frequency_diff_mask(sv, 123.456, sv.frequency_hz[0], 0, 1)


def test_fdiff_grid_mismatch():
    rng = np.random.default_rng(8)
    sv = random_sv_grid(rng, 2, 3, 4, shared_range=False)
    assert not np.array_equal(sv.range_m[0], sv.range_m[1])
    with pytest.raises(GridMismatch):
        frequency_diff_mask(sv, sv.frequency_hz[0], sv.frequency_hz[1], 0, 1)

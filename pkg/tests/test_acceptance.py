"""Acceptance suite: one test per criterion, each printing a PASS line.

Run with ``pytest tests/test_acceptance.py -v -s`` to see the lines.
"""

import json
import math
import os
import subprocess
import sys
import time
from pathlib import Path

import numpy as np
from PIL import Image

from echograin import store
from echograin.calibrate import compute_sv, resolve_cal_params, sv_offset_db
from echograin.cli import load_palette
from echograin.convert import LocalByteSource, ConvertOptions, convert_raw, open_byte_source
from echograin.datagram import (
    FixtureSpec,
    generate_fixture,
    iter_datagrams,
    parse_body,
)
from echograin.metrics import NASC_SCALE, compute_metrics
from echograin.model import align_ragged, build_echodata, grid_to_ragged
from echograin.process import MvbsParams, compute_mvbs, repair_time_reversals
from echograin.store import ArrayMeta, StorePath, read_array, write_array, write_grid_store
from tests.conftest import random_sv_grid
from tests.test_calibrate import _scalar_sv_oracle, unit_params
from tests.test_metrics import metrics_oracle, profile_grid
from tests.test_process import mvbs_oracle

HERE = Path(__file__).parent


def _passed(n, text):
    print(f"\nACCEPTANCE {n}: PASS - {text}")


def _sample_specs(count, seed=0):
    """Fixture population: 1-4 channels, 1-500 pings, ragged counts 0-2048."""
    rng = np.random.default_rng(seed)
    specs = []
    for i in range(count):
        n_pings = int(round(math.exp(rng.uniform(0.0, math.log(500)))))
        cmax = int(round(math.exp(rng.uniform(0.0, math.log(2048)))))
        specs.append(
            FixtureSpec(
                seed=10_000 + i,
                n_channels=int(rng.integers(1, 5)),
                n_pings=n_pings,
                count_range=(int(rng.integers(0, cmax + 1)), cmax),
                n_nmea=int(rng.integers(0, 20)),
                time_jitter_s=float(rng.uniform(0.0, 0.3)),
            )
        )
    # pin the corners of the sampled ranges
    specs[0] = FixtureSpec(seed=1, n_channels=4, n_pings=500, count_range=(0, 2048), n_nmea=25)
    specs[1] = FixtureSpec(seed=2, n_channels=1, n_pings=1, count_range=(0, 0), n_nmea=1)
    specs[2] = FixtureSpec(seed=3, n_channels=2, n_pings=2, count_range=(2048, 2048))
    return specs


def test_criterion_1_parser_round_trip(tmp_path):
    specs = _sample_specs(1000)
    start = time.perf_counter()
    failures = 0
    for i, spec in enumerate(specs):
        data, truth = generate_fixture(spec)
        path = tmp_path / f"f{i:04d}.raw"
        path.write_bytes(data)
        with open(path, "rb") as fh:
            stream = iter_datagrams(fh)
            for code, ts, obj in truth.records:
                dg = next(stream)
                if (dg.type_code, dg.timestamp_ns) != (code, ts) or parse_body(code, dg.body) != obj:
                    failures += 1
                    break
            else:
                if next(stream, None) is not None:
                    failures += 1
        path.unlink()
    elapsed = time.perf_counter() - start
    assert failures == 0
    assert elapsed < 60.0, f"took {elapsed:.1f}s"
    _passed(1, f"1000 fixture files round-tripped exactly in {elapsed:.1f}s")


def test_criterion_2_restructuring():
    specs = _sample_specs(1000)
    for spec in specs:
        _, truth = generate_fixture(spec)
        per_channel = {}
        for ts, rec in truth.pings:
            f = truth.config.transducers[rec.channel - 1].frequency_hz
            per_channel.setdefault(f, []).append((ts, rec.power_counts))
        grid = align_ragged(per_channel)

        # NaN pattern == "k >= sample_count or missing ping", cell for cell
        n_f, n_t, n_r = grid.shape
        counts = np.full((n_f, n_t), -1, dtype=np.int64)
        fi_of = {f: i for i, f in enumerate(grid.frequency_hz)}
        ti_of = {int(t): i for i, t in enumerate(grid.ping_time)}
        for f, chan in per_channel.items():
            for ts, vec in chan:
                counts[fi_of[float(f)], ti_of[int(ts)]] = len(vec)
        k = np.arange(n_r)
        expected_nan = (counts[:, :, None] < 0) | (k[None, None, :] >= counts[:, :, None])
        assert np.array_equal(np.isnan(grid.values), expected_nan)

        # ragged source reconstructed losslessly from grid + counts
        ragged = grid_to_ragged(grid.values, counts)
        for f, chan in per_channel.items():
            fi = fi_of[float(f)]
            for ts, vec in chan:
                got = ragged[fi][ti_of[int(ts)]]
                assert got is not None and len(got) == len(vec)
                assert np.array_equal(got.astype(np.int16), vec)
        for fi in range(n_f):
            for ti in range(n_t):
                if counts[fi, ti] < 0:
                    assert ragged[fi][ti] is None
    _passed(2, "padding pattern and lossless reconstruction hold on 1000 fixtures")


def _npm_install(cwd: Path):
    if (cwd / "node_modules" / "zarrita").is_dir():
        return
    proc = subprocess.run(
        ["npm", "install", "--no-audit", "--no-fund"],
        cwd=cwd, capture_output=True, text=True, timeout=300,
    )
    assert proc.returncode == 0, f"npm install failed:\n{proc.stderr}"


ZARRAY_SCHEMA = {
    "type": "object",
    "required": ["zarr_format", "shape", "chunks", "dtype", "compressor",
                 "fill_value", "order", "filters"],
    "properties": {
        "zarr_format": {"const": 2},
        "shape": {"type": "array", "items": {"type": "integer", "minimum": 0}},
        "chunks": {"type": "array", "items": {"type": "integer", "minimum": 1}},
        "dtype": {"type": "string"},
        "compressor": {
            "oneOf": [
                {"type": "null"},
                {"type": "object", "required": ["id"], "properties": {"id": {"type": "string"}}},
            ]
        },
        "fill_value": {"oneOf": [{"type": "null"}, {"type": "number"},
                                 {"type": "boolean"}, {"enum": ["NaN", "Infinity", "-Infinity"]}]},
        "order": {"enum": ["C", "F"]},
        "filters": {"type": "null"},
    },
}


def test_criterion_3_store_compliance(tmp_path):
    import jsonschema

    rng = np.random.default_rng(99)
    makers = {
        "<f8": lambda s: rng.normal(size=s),
        "<f4": lambda s: rng.normal(size=s).astype(np.float32),
        "<i8": lambda s: rng.integers(-2**50, 2**50, size=s),
        "<i2": lambda s: rng.integers(-32768, 32768, size=s).astype(np.int16),
        "<i1": lambda s: rng.integers(-128, 128, size=s).astype(np.int8),
        "|b1": lambda s: rng.random(size=s) < 0.5,
    }
    dtypes = list(makers)
    for i in range(200):
        dtype = dtypes[i % len(dtypes)]
        rank = int(rng.integers(1, 4))
        shape = tuple(int(v) for v in rng.integers(1, 13, size=rank))
        chunks = tuple(int(v) for v in rng.integers(1, 16, size=rank))  # may exceed shape
        data = np.ascontiguousarray(makers[dtype](shape))
        if dtype.startswith("<f") and rng.random() < 0.3:
            flat = data.reshape(-1)
            flat[rng.integers(0, flat.size)] = np.nan
        comp = {"id": "zlib", "level": int(rng.integers(1, 7))} if i % 2 else None
        fill = np.nan if dtype.startswith("<f") else (False if dtype == "|b1" else 0)
        path = StorePath(tmp_path / "arrays", "", f"a{i:03d}")
        write_array(path, ArrayMeta(shape, chunks, dtype, fill, comp), data)
        _, back, _ = read_array(path)
        assert back.dtype == data.dtype and back.tobytes() == data.tobytes()
        if i % 10 == 0:
            raw = json.loads((path.directory() / ".zarray").read_text())
            jsonschema.validate(raw, ZARRAY_SCHEMA)

    # reference store for the one-time third-party compatibility check
    _, truth = generate_fixture(FixtureSpec(seed=303, n_channels=2, n_pings=40, n_nmea=5))
    ed = build_echodata(truth.config, truth.pings, truth.nmea)
    sv = compute_sv(ed)
    ref = tmp_path / "reference_sv"
    write_grid_store(sv, ref)
    names = ["Sv", "frequency", "ping_time", "range_bin", "range_m"]
    for name in names:
        raw = json.loads((ref / name / ".zarray").read_text())
        jsonschema.validate(raw, ZARRAY_SCHEMA)

    _npm_install(HERE / "thirdparty")
    proc = subprocess.run(
        ["node", str(HERE / "thirdparty" / "read_store.mjs"), str(ref), *names],
        capture_output=True, text=True, timeout=120,
    )
    assert proc.returncode == 0, f"third-party reader failed:\n{proc.stderr}"
    import base64

    decoded = json.loads(proc.stdout)
    expected = {
        "Sv": sv.values.astype("<f4"),
        "frequency": sv.frequency_hz.astype("<f8"),
        "ping_time": sv.ping_time.astype("<i8"),
        "range_bin": sv.range_bin.astype("<i8"),
        "range_m": sv.range_m.astype("<f8"),
    }
    for name, want in expected.items():
        got = decoded[name]
        assert tuple(got["shape"]) == want.shape
        assert base64.b64decode(got["b64"]) == want.tobytes()
    _passed(3, "200 arrays bitwise, metadata schema-valid, third-party reader bit-exact")


def test_criterion_4_calibration_oracle():
    rng = np.random.default_rng(44)
    # per-cell scalar reimplementation on 100 random grids
    for i in range(100):
        spec = FixtureSpec(
            seed=7000 + i,
            n_channels=int(rng.integers(1, 4)),
            n_pings=int(rng.integers(1, 8)),
            count_range=(int(rng.integers(0, 10)), int(rng.integers(10, 50))),
        )
        _, truth = generate_fixture(spec)
        ed = build_echodata(truth.config, truth.pings, truth.nmea)
        sv = compute_sv(ed)
        oracle = _scalar_sv_oracle(ed, "sv")
        assert np.allclose(sv.values, oracle, rtol=0, atol=1e-9, equal_nan=True)

    # unit-parameter offset, independently derived
    assert abs(sv_offset_db(unit_params()) - (-10 * math.log10(32 * math.pi**2))) <= 1e-9

    # dB-linearity to 1e-12
    _, truth = generate_fixture(FixtureSpec(seed=7505, n_channels=2, n_pings=6))
    ed = build_echodata(truth.config, truth.pings, truth.nmea)
    base = compute_sv(ed)
    ed.beam.arrays["backscatter_r"].values += 2.5
    bumped = compute_sv(ed)
    assert np.allclose(bumped.values, base.values + 2.5, rtol=0, atol=1e-12, equal_nan=True)

    # gain sensitivity -2 dB/dB against finite differences of the offset
    h = 1e-3
    for g in (0.0, 7.7, 25.5):
        fd = (sv_offset_db(unit_params(gain_db=g + h))
              - sv_offset_db(unit_params(gain_db=g - h))) / (2 * h)
        assert abs(fd - 2.0) <= 1e-9          # dSv/dG = -dC/dG = -2

    # 2*alpha*r law
    ed2 = build_echodata(truth.config, truth.pings, truth.nmea)
    sv_a = compute_sv(ed2)
    f0 = float(sv_a.frequency_hz[0])
    alpha0 = resolve_cal_params(ed2)[f0].absorption_db_m
    sv_b = compute_sv(ed2, overrides={f0: {"absorption_db_m": alpha0 + 0.01}})
    fi = 0
    diff = sv_b.values[fi] - sv_a.values[fi]
    want = 2 * 0.01 * sv_a.range_m[fi]
    finite = np.isfinite(diff)
    assert np.allclose(diff[finite], np.broadcast_to(want, diff.shape)[finite],
                       rtol=0, atol=1e-9)
    _passed(4, "scalar oracle, unit offset, linearity, gain and absorption laws")


def test_criterion_5_mvbs_oracle():
    rng = np.random.default_rng(55)
    for _ in range(100):
        n_f = int(rng.integers(1, 4))
        n_t = int(rng.integers(1, 14))
        n_r = int(rng.integers(1, 22))
        sv = random_sv_grid(rng, n_f, n_t, n_r, nan_fraction=float(rng.uniform(0, 0.4)),
                            shared_range=bool(rng.integers(0, 2)))
        if rng.integers(0, 2):
            params = MvbsParams(float(rng.uniform(0.05, 2.5)),
                                ping_count=int(rng.integers(1, 7)))
        else:
            params = MvbsParams(float(rng.uniform(0.05, 2.5)),
                                ping_seconds=float(rng.uniform(0.5, 12.0)))
        got = compute_mvbs(sv, params)
        want, labels, starts = mvbs_oracle(sv, params)
        assert np.array_equal(got.ping_time, labels)
        assert np.allclose(got.values, want, rtol=0, atol=1e-9, equal_nan=True)

    # constant field is exact
    c = -47.25
    values = np.full((2, 9, 13), c)
    sv = random_sv_grid(np.random.default_rng(1), 2, 9, 13, nan_fraction=0.0)
    sv.values[:] = c
    out = compute_mvbs(sv, MvbsParams(0.9, ping_seconds=3.0))
    finite = np.isfinite(out.values)
    assert np.allclose(out.values[finite], c, rtol=0, atol=1e-12)

    # identity binning
    sv2 = random_sv_grid(np.random.default_rng(2), 1, 7, 9, nan_fraction=0.1)
    spacing = float(sv2.range_m[0, 1] - sv2.range_m[0, 0])
    ident = compute_mvbs(sv2, MvbsParams(spacing, ping_count=1))
    assert ident.shape == sv2.shape
    finite = np.isfinite(sv2.values)
    assert np.allclose(ident.values[finite], sv2.values[finite], rtol=0, atol=1e-12)

    # hand case
    two = profile_grid([[-10.0, -20.0]], spacing=0.5)
    got = compute_mvbs(two, MvbsParams(5.0, ping_count=1))
    assert abs(got.values[0, 0, 0] - 10 * math.log10((0.1 + 0.01) / 2)) < 1e-12
    assert abs(got.values[0, 0, 0] - (-12.5964)) < 1e-4
    _passed(5, "brute-force equality on 100 cases, exact invariants, hand value")


def test_criterion_6_qc():
    rng = np.random.default_rng(66)
    window_s = 60.0
    for trial in range(25):
        n_pings = int(rng.integers(20, 80))
        positions = rng.choice(np.arange(2, n_pings - 1, 2),
                               size=int(rng.integers(1, 4)), replace=False)
        small = sorted(int(p) for p in positions[: max(1, len(positions) - 1)])
        large = sorted(int(p) for p in positions[len(small):])
        reversals = [(p, float(rng.uniform(1.5, 55.0))) for p in small]
        reversals += [(p, float(rng.uniform(70.0, 200.0))) for p in large]
        _, truth = generate_fixture(
            FixtureSpec(seed=6600 + trial, n_channels=1, n_pings=n_pings,
                        reversals=reversals)
        )
        times = np.array(truth.emitted_times_ns, dtype=np.int64)
        repaired, report = repair_time_reversals(times, window_s=window_s)
        assert report.fixed == small
        assert report.unfixable == large
        if not large:
            assert (np.diff(repaired) > 0).all()
        again, second = repair_time_reversals(repaired, window_s=window_s)
        assert np.array_equal(again, repaired)
        assert second.fixed == []
    _passed(6, "injected reversals classified exactly; repair idempotent")


def test_criterion_7_metrics():
    # point-mass and uniform identities at 1e-12 relative
    dz = 0.5
    profile = np.full(12, np.nan)
    profile[4] = -51.0
    grid = profile_grid([profile], spacing=dz)
    row = compute_metrics(grid)[0]
    z4 = grid.range_m[0, 4]
    assert abs(row.center_of_mass_m - z4) <= 1e-12 * z4
    assert abs(row.inertia_m2) <= 1e-12
    assert abs(row.equivalent_area_m - dz) <= 1e-12 * dz
    assert abs(row.aggregation_per_m - 1 / dz) <= 1e-12 / dz

    level, n = -44.0, 20
    uniform = compute_metrics(profile_grid([np.full(n, level)], spacing=dz))[0]
    z = profile_grid([np.full(n, level)], spacing=dz).range_m[0]
    s_lin = 10 ** (level / 10)
    assert abs(uniform.center_of_mass_m - z.mean()) <= 1e-12 * abs(z.mean())
    assert abs(uniform.equivalent_area_m - n * dz) <= 1e-12 * n * dz
    assert abs(uniform.sa - n * s_lin * dz) <= 1e-12 * n * s_lin * dz

    # 1000 random profiles against the straight-loop oracle at 1e-9 relative
    rng = np.random.default_rng(77)
    profiles = rng.uniform(-95.0, -25.0, size=(1000, 30))
    profiles[rng.random(profiles.shape) < 0.25] = np.nan
    dz = 0.41
    grid = profile_grid(profiles, spacing=dz)
    rows = compute_metrics(grid)
    z = grid.range_m[0]
    for ti, row in enumerate(rows):
        want = metrics_oracle(profiles[ti], z, dz)
        if want is None:
            assert row.sa is None
            continue
        assert abs(row.sa - want["sa"]) <= 1e-9 * abs(want["sa"])
        assert abs(row.nasc - want["nasc"]) <= 1e-9 * abs(want["nasc"])
        assert abs(row.center_of_mass_m - want["cm"]) <= 1e-9 * abs(want["cm"])
        assert abs(row.inertia_m2 - want["inertia"]) <= 1e-9 * max(abs(want["inertia"]), 1e-12)
        assert abs(row.equivalent_area_m - want["ea"]) <= 1e-9 * abs(want["ea"])
        assert abs(row.aggregation_per_m - want["ia"]) <= 1e-9 * abs(want["ia"])
        assert row.nasc == row.sa * NASC_SCALE

    # scale invariance and translation covariance suites
    base_profile = rng.uniform(-80, -40, size=25)
    a = compute_metrics(profile_grid([base_profile], spacing=0.3))[0]
    b = compute_metrics(profile_grid([base_profile + 6.0], spacing=0.3))[0]
    factor = 10 ** 0.6
    assert abs(b.sa - a.sa * factor) <= 1e-12 * b.sa
    assert abs(b.center_of_mass_m - a.center_of_mass_m) <= 1e-12 * a.center_of_mass_m
    assert abs(b.inertia_m2 - a.inertia_m2) <= 1e-9 * a.inertia_m2
    assert abs(b.equivalent_area_m - a.equivalent_area_m) <= 1e-12 * a.equivalent_area_m
    assert abs(b.aggregation_per_m - a.aggregation_per_m) <= 1e-12 * a.aggregation_per_m

    d = 42.0
    s1 = compute_metrics(profile_grid([base_profile], spacing=0.3, first_range=0.15))[0]
    s2 = compute_metrics(profile_grid([base_profile], spacing=0.3, first_range=0.15 + d))[0]
    assert abs((s2.center_of_mass_m - s1.center_of_mass_m) - d) <= 1e-9 * d
    assert abs(s2.inertia_m2 - s1.inertia_m2) <= 1e-9 * s1.inertia_m2
    assert abs(s2.equivalent_area_m - s1.equivalent_area_m) <= 1e-12 * s1.equivalent_area_m
    _passed(7, "identities, 1000-profile oracle, scale/translation suites")


def test_criterion_8_transport_invariance(tmp_path, http_server):
    data, _ = generate_fixture(FixtureSpec(seed=88, n_channels=2, n_pings=64, n_nmea=9))
    (tmp_path / "served.raw").write_bytes(data)
    opts = ConvertOptions(conversion_time="2026-01-01T00:00:00Z")
    with LocalByteSource(tmp_path / "served.raw") as src:
        local = convert_raw(src, opts)
    with open_byte_source(f"{http_server}/served.raw") as src:
        remote = convert_raw(src, opts)
    local.provenance.attrs["source_files"] = ["<common>"]
    remote.provenance.attrs["source_files"] = ["<common>"]
    assert local == remote
    _passed(8, "HTTP conversion field-identical to local conversion")


def _run_cli(args, env):
    proc = subprocess.run(
        [sys.executable, "-m", "echograin", *args],
        capture_output=True, text=True, env=env, timeout=300,
    )
    assert proc.returncode == 0, f"{args[0]} failed ({proc.returncode}):\n{proc.stderr}"
    return proc


def _tree_bytes(root: Path) -> dict:
    out = {}
    for path in sorted(root.rglob("*")):
        if path.is_file():
            out[str(path.relative_to(root))] = path.read_bytes()
    return out


def _run_pipeline(raw: Path, work: Path, pair: tuple[float, float], env) -> float:
    work.mkdir()
    f_a, f_b = pair
    start = time.perf_counter()
    _run_cli(["convert", str(raw), "--out", str(work / "ed")], env)
    _run_cli(["qc", str(work / "ed"), "--out", str(work / "qc"),
              "--report", str(work / "qc.json")], env)
    _run_cli(["calibrate", str(work / "qc"), "--out", str(work / "sv")], env)
    _run_cli(["mvbs", str(work / "sv"), "--out", str(work / "mvbs"),
              "--range-bin", "1", "--ping-bin", "10s"], env)
    _run_cli(["fdiff", str(work / "mvbs"), "--pair", f"{f_a},{f_b}",
              "--min", "-5", "--max", "15", "--out", str(work / "mask")], env)
    _run_cli(["metrics", str(work / "sv"), "--out", str(work / "metrics.csv")], env)
    _run_cli(["echogram", str(work / "mvbs"), "--freq", str(f_a),
              "--out", str(work / "echogram.png")], env)
    return time.perf_counter() - start


def test_criterion_9_end_to_end(tmp_path):
    rng = np.random.default_rng(9)
    counts = [
        [int(c) for c in rng.integers(400, 700, size=2000)],
        [int(c) for c in rng.integers(300, 650, size=2000)],
    ]
    spec = FixtureSpec(
        seed=909, n_channels=2, n_pings=2000, sample_counts=counts,
        mode=1, n_nmea=50, ping_interval_s=1.0,
        reversals=[(100, 3.0), (1500, 7.5)],
    )
    data, truth = generate_fixture(spec)
    raw = tmp_path / "survey.raw"
    raw.write_bytes(data)
    pair = (truth.config.transducers[0].frequency_hz,
            truth.config.transducers[1].frequency_hz)

    env = dict(os.environ, SOURCE_DATE_EPOCH="1750000000")
    elapsed = _run_pipeline(raw, tmp_path / "run1", pair, env)
    assert elapsed < 10.0, f"pipeline took {elapsed:.1f}s"
    _run_pipeline(raw, tmp_path / "run2", pair, env)

    trees = [_tree_bytes(tmp_path / d) for d in ("run1", "run2")]
    assert trees[0].keys() == trees[1].keys()
    for rel in trees[0]:
        assert trees[0][rel] == trees[1][rel], f"{rel} differs between runs"

    # echogram pixels match the per-pixel binning oracle
    mv = store.read_grid_store(tmp_path / "run1" / "mvbs")
    fi = mv.frequency_index(pair[0])
    pal = load_palette()
    vmin, vmax = -80.0, -30.0
    n = len(pal.colors)
    pixels = np.asarray(Image.open(tmp_path / "run1" / "echogram.png"))
    assert pixels.shape == (mv.shape[2], mv.shape[1], 3)
    for ti in range(mv.shape[1]):
        for k in range(mv.shape[2]):
            v = mv.values[fi, ti, k]
            if math.isnan(v):
                want = pal.nan
            elif v < vmin:
                want = pal.below
            else:
                want = pal.colors[min(int(math.floor(n * (v - vmin) / (vmax - vmin))), n - 1)]
            assert tuple(pixels[k, ti]) == want
    _passed(9, f"pipeline deterministic and complete in {elapsed:.1f}s")


def test_criterion_10_chunk_parallel_determinism(tmp_path):
    _, truth = generate_fixture(
        FixtureSpec(seed=111, n_channels=3, n_pings=60, count_range=(10, 120))
    )
    ed = build_echodata(truth.config, truth.pings, truth.nmea)

    sv_trees = []
    mv_trees = []
    for parts in (1, 2, 8):
        sv = compute_sv(ed, partitions=parts)
        sv_dir = tmp_path / f"sv_{parts}"
        write_grid_store(sv, sv_dir)
        sv_trees.append(_tree_bytes(sv_dir))

        mv = compute_mvbs(sv, MvbsParams(1.0, ping_seconds=5.0), partitions=parts)
        mv_dir = tmp_path / f"mvbs_{parts}"
        write_grid_store(mv, mv_dir)
        mv_trees.append(_tree_bytes(mv_dir))

    for other in sv_trees[1:]:
        assert other == sv_trees[0]
    for other in mv_trees[1:]:
        assert other == mv_trees[0]
    _passed(10, "1/2/8-partition Sv and MVBS stores byte-identical")

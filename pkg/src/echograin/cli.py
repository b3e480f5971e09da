"""Command-line surface: convert, qc, calibrate, mvbs, fdiff, metrics,
echogram, info.

Exit codes: 0 success, 1 usage error, 2 malformed input, 3 I/O or
transport failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np

from . import __version__
from . import store as store_mod
from .calibrate import compute_sv
from .convert import ConvertOptions, convert_raw, open_byte_source
from .datagram import iter_datagrams, parse_con0
from .errors import (
    EchograinError,
    FrequencyNotFound,
    InvalidParams,
    InvalidRange,
    ParseError,
    TransferError,
)
from .metrics import compute_metrics, iso_ns, write_metrics_csv
from .model import EchoData
from .process import (
    DEFAULT_REVERSAL_EPSILON_S,
    DEFAULT_REVERSAL_WINDOW_S,
    MvbsParams,
    compute_mvbs,
    frequency_diff_mask,
    repair_time_reversals,
)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_PARSE = 2
EXIT_IO = 3


class _Parser(argparse.ArgumentParser):
    """argparse that follows this tool's exit-code contract (usage -> 1)."""

    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


@dataclass(frozen=True)
class Palette:
    """Discrete echogram colors plus below-minimum and missing-data colors."""

    colors: tuple[tuple[int, int, int], ...]
    below: tuple[int, int, int]
    nan: tuple[int, int, int]

    def __post_init__(self):
        if len(self.colors) < 2:
            raise InvalidParams("palette needs at least 2 colors")
        for rgb in (*self.colors, self.below, self.nan):
            if len(rgb) != 3 or any(not 0 <= v <= 255 for v in rgb):
                raise InvalidParams(f"bad 8-bit color triple {rgb!r}")


def load_palette(path=None) -> Palette:
    """Load a palette JSON ({colors, below, nan}); default is the bundled table."""
    if path is None:
        raw = json.loads(
            resources.files("echograin").joinpath("data/ek500.json").read_text()
        )
    else:
        raw = json.loads(Path(path).read_text())
    return Palette(
        colors=tuple(tuple(c) for c in raw["colors"]),
        below=tuple(raw["below"]),
        nan=tuple(raw["nan"]),
    )


def render_echogram(values: np.ndarray, vmin: float, vmax: float, palette: Palette) -> np.ndarray:
    """Map one channel's Sv (ping_time, range_bin) to RGB pixels.

    Output shape is (range_bin, ping_time, 3): row 0 is the shallowest
    range, one column per ping. Values bin linearly into the palette
    (floor, clamped at the top); below-minimum and NaN cells get their
    dedicated colors.
    """
    if not vmin < vmax:
        raise InvalidRange(f"vmin {vmin} must be < vmax {vmax}")
    img = values.T                       # (range_bin, ping_time), row 0 shallow
    n = len(palette.colors)
    with np.errstate(invalid="ignore"):
        idx = np.floor(n * (img - vmin) / (vmax - vmin)).astype(np.int64, copy=False)
    idx = np.clip(idx, 0, n - 1)
    table = np.array(palette.colors, dtype=np.uint8)
    out = table[idx]
    finite = np.isfinite(img)
    out[finite & (img < vmin)] = np.array(palette.below, dtype=np.uint8)
    out[~finite] = np.array(palette.nan, dtype=np.uint8)
    return out


def _summary_line(ed: EchoData) -> str:
    beam = ed.beam
    times = beam.arrays["ping_time"].values
    span = f"{iso_ns(int(times[0]))} .. {iso_ns(int(times[-1]))}" if len(times) else "empty"
    return (
        f"{len(beam.arrays['frequency'].values)} channels, "
        f"{len(times)} pings, {span}"
    )


def _cmd_convert(args) -> int:
    inputs = args.input
    out = Path(args.out)

    def _one(uri, target) -> str:
        options = ConvertOptions(max_datagram_bytes=args.max_datagram_bytes)
        with open_byte_source(uri) as src:
            ed = convert_raw(src, options)
        store_mod.write_echodata(ed, target)
        return f"{uri} -> {target}: {_summary_line(ed)}"

    if len(inputs) == 1:
        print(_one(inputs[0], out))
        return EXIT_OK
    jobs = max(1, args.jobs)
    targets = [out / Path(uri).stem for uri in inputs]
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        for line in pool.map(_one, inputs, targets):
            print(line)
    return EXIT_OK


def _cmd_info(args) -> int:
    histogram: dict[str, int] = {}
    channels = 0
    first_ts = last_ts = None
    with open_byte_source(args.input) as src:
        for dg in iter_datagrams(src):
            histogram[dg.type_code] = histogram.get(dg.type_code, 0) + 1
            if first_ts is None:
                first_ts = dg.timestamp_ns
            last_ts = dg.timestamp_ns
            if dg.type_code == "CON0" and not channels:
                channels = parse_con0(dg.body).transducer_count
    if not histogram:
        print("no datagrams found", file=sys.stderr)
        return EXIT_PARSE
    for code in sorted(histogram):
        print(f"{code}: {histogram[code]}")
    print(f"channels: {channels}")
    print(f"time span: {iso_ns(first_ts)} .. {iso_ns(last_ts)}")
    return EXIT_OK


def _cmd_qc(args) -> int:
    ed = store_mod.read_echodata(args.store)
    times = ed.beam.arrays["ping_time"].values
    repaired, report = repair_time_reversals(times, args.window, args.epsilon)
    for group in (ed.beam, ed.platform):
        if "ping_time" in group.arrays:
            group.arrays["ping_time"].values = repaired.copy()
    store_mod.write_echodata(ed, args.out)
    payload = report.to_dict(args.window, args.epsilon)
    if args.report:
        Path(args.report).write_text(json.dumps(payload, indent=2) + "\n")
    print(
        f"fixed {len(report.fixed)} reversal(s), "
        f"{len(report.unfixable)} unfixable -> {args.out}"
    )
    return EXIT_OK


def _load_overrides(path, sound_speed, absorption):
    overrides: dict = {}
    if path:
        overrides = json.loads(Path(path).read_text())
    if sound_speed is not None or absorption is not None:
        # flag values apply to every frequency unless the file already set one
        overrides = {"__flags__": {}, **overrides}
        if sound_speed is not None:
            overrides["__flags__"]["sound_speed_m_s"] = sound_speed
        if absorption is not None:
            overrides["__flags__"]["absorption_db_m"] = absorption
    return overrides


def _expand_flag_overrides(overrides: dict, frequencies) -> dict:
    flags = overrides.pop("__flags__", None)
    if not flags:
        return overrides
    merged = {}
    for f in frequencies:
        per = dict(flags)
        for key, value in overrides.items():
            if float(key) == float(f):
                per.update(value)
        merged[float(f)] = per
    return merged


def _cmd_calibrate(args) -> int:
    ed = store_mod.read_echodata(args.store)
    overrides = _load_overrides(args.cal_overrides, args.sound_speed, args.absorption)
    overrides = _expand_flag_overrides(overrides, ed.beam.arrays["frequency"].values)
    sv = compute_sv(ed, overrides, partitions=args.partitions)
    store_mod.write_grid_store(sv, args.out, attrs={"content": "Sv", "units": "dB re 1 m-1"})
    print(f"Sv store: {sv.shape[0]} channels x {sv.shape[1]} pings x {sv.shape[2]} bins -> {args.out}")
    return EXIT_OK


def _mvbs_params(args) -> MvbsParams:
    text = args.ping_bin.strip().lower()
    try:
        if text.endswith("s"):
            return MvbsParams(args.range_bin, ping_seconds=float(text[:-1]))
        if text.endswith("c"):
            return MvbsParams(args.range_bin, ping_count=int(text[:-1]))
    except ValueError:
        pass
    raise InvalidParams(
        f"--ping-bin must look like '10s' (seconds) or '5c' (ping count), got {text!r}"
    )


def _cmd_mvbs(args) -> int:
    sv = store_mod.read_grid_store(args.store)
    params = _mvbs_params(args)
    out = compute_mvbs(sv, params, partitions=args.partitions)
    store_mod.write_grid_store(out, args.out, attrs={"content": "MVBS", "units": "dB re 1 m-1"})
    print(f"MVBS: {out.shape[0]} channels x {out.shape[1]} ping bins x {out.shape[2]} range bins -> {args.out}")
    return EXIT_OK


def _cmd_fdiff(args) -> int:
    sv = store_mod.read_grid_store(args.store)
    try:
        f_a, f_b = (float(part) for part in args.pair.split(","))
    except ValueError:
        raise InvalidParams(f"--pair must be 'freqA,freqB' in Hz, got {args.pair!r}") from None
    mask = frequency_diff_mask(sv, f_a, f_b, args.min, args.max)
    store_mod.write_mask_store(mask, args.out)
    kept = int(mask.values.sum())
    print(f"mask keeps {kept} of {mask.values.size} cells -> {args.out}")
    return EXIT_OK


def _cmd_metrics(args) -> int:
    sv = store_mod.read_grid_store(args.store)
    rows = compute_metrics(sv)
    write_metrics_csv(rows, args.out)
    print(f"{len(rows)} rows -> {args.out}")
    return EXIT_OK


def _cmd_echogram(args) -> int:
    from PIL import Image

    sv = store_mod.read_grid_store(args.store)
    fi = sv.frequency_index(args.freq)
    if fi is None:
        raise FrequencyNotFound(f"{args.freq:.0f} Hz not in {args.store}")
    palette = load_palette(args.palette)
    pixels = render_echogram(sv.values[fi], args.vmin, args.vmax, palette)
    Image.fromarray(pixels, mode="RGB").save(args.out, format="PNG")
    print(f"{pixels.shape[1]} x {pixels.shape[0]} px echogram -> {args.out}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="echograin", description=__doc__)
    parser.add_argument("--version", action="version", version=f"echograin {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("convert", help="raw file(s) -> chunked dataset store")
    p.add_argument("input", nargs="+", help="raw file path(s) or http(s) URL(s)")
    p.add_argument("--out", required=True, help="store directory (parent dir for multiple inputs)")
    p.add_argument("--max-datagram-bytes", type=int, default=16 * 1024 * 1024)
    p.add_argument("--jobs", type=int, default=1, help="parallel conversions for multiple inputs")
    p.set_defaults(func=_cmd_convert)

    p = sub.add_parser("info", help="datagram histogram, channels and time span")
    p.add_argument("input")
    p.set_defaults(func=_cmd_info)

    p = sub.add_parser("qc", help="repair small ping-time reversals")
    p.add_argument("store")
    p.add_argument("--out", required=True)
    p.add_argument("--window", type=float, default=DEFAULT_REVERSAL_WINDOW_S,
                   help="largest repairable reversal, seconds")
    p.add_argument("--epsilon", type=float, default=DEFAULT_REVERSAL_EPSILON_S,
                   help="forward nudge, seconds")
    p.add_argument("--report", help="write a JSON repair report here")
    p.set_defaults(func=_cmd_qc)

    p = sub.add_parser("calibrate", help="dataset store -> calibrated Sv store")
    p.add_argument("store")
    p.add_argument("--out", required=True)
    p.add_argument("--sound-speed", type=float, help="override sound speed, m/s")
    p.add_argument("--absorption", type=float, help="override absorption, dB/m")
    p.add_argument("--cal-overrides", help="JSON file {frequency_hz: {param: value}}")
    p.add_argument("--partitions", type=int, default=1)
    p.set_defaults(func=_cmd_calibrate)

    p = sub.add_parser("mvbs", help="bin-average an Sv store in the linear domain")
    p.add_argument("store")
    p.add_argument("--out", required=True)
    p.add_argument("--range-bin", type=float, required=True, help="range bin size, m")
    p.add_argument("--ping-bin", required=True, help="'10s' seconds or '5c' ping count")
    p.add_argument("--partitions", type=int, default=1)
    p.set_defaults(func=_cmd_mvbs)

    p = sub.add_parser("fdiff", help="frequency-differencing mask between two channels")
    p.add_argument("store")
    p.add_argument("--pair", required=True, help="'freqA,freqB' in Hz")
    p.add_argument("--min", type=float, required=True, help="lower dB bound")
    p.add_argument("--max", type=float, required=True, help="upper dB bound")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_fdiff)

    p = sub.add_parser("metrics", help="vertical-distribution statistics -> CSV")
    p.add_argument("store")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_metrics)

    p = sub.add_parser("echogram", help="quick-look PNG of one channel")
    p.add_argument("store")
    p.add_argument("--freq", type=float, required=True, help="channel frequency, Hz")
    p.add_argument("--vmin", type=float, default=-80.0)
    p.add_argument("--vmax", type=float, default=-30.0)
    p.add_argument("--out", required=True)
    p.add_argument("--palette", help="palette JSON file overriding the bundled one")
    p.set_defaults(func=_cmd_echogram)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except ParseError as exc:
        print(f"echograin: parse error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except TransferError as exc:
        print(f"echograin: i/o error: {exc}", file=sys.stderr)
        return EXIT_IO
    except OSError as exc:
        print(f"echograin: i/o error: {exc}", file=sys.stderr)
        return EXIT_IO
    except EchograinError as exc:
        print(f"echograin: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except json.JSONDecodeError as exc:
        print(f"echograin: parse error: {exc}", file=sys.stderr)
        return EXIT_PARSE


if __name__ == "__main__":
    raise SystemExit(main())

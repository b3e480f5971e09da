"""Chunked on-disk array hierarchy, wire-compatible with Zarr v2.

Each array is a directory holding ``.zarray`` (JSON metadata), ``.zattrs``
(JSON attributes) and one file per chunk, named by dot-joined chunk grid
indices. Chunks store full C-order little-endian blocks (edge chunks are
padded with the fill value) and are optionally deflate-compressed.
Dimension labels ride along in the ``_ARRAY_DIMENSIONS`` attribute so
labeled datasets round-trip self-describingly.
"""

from __future__ import annotations

import itertools
import json
import math
import re
import zlib
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Union

import numpy as np

from .errors import (
    ChunkSizeMismatch,
    CorruptMetadata,
    IoFailure,
    MissingGroup,
    NotFound,
    ShapeMismatch,
)
from .model import GROUP_NAMES, EchoData, Group, Variable

ZARR_FORMAT = 2

SUPPORTED_DTYPES = ("<f8", "<f4", "<i8", "<i2", "<i1", "|b1")

_NAME_RE = re.compile(r"^[A-Za-z0-9_]+$")

DIMENSIONS_ATTR = "_ARRAY_DIMENSIONS"

# Default chunk cap per dimension name; unlisted dimensions stay unchunked.
DEFAULT_CHUNK_CAPS = {"frequency": 1, "ping_time": 512, "range_bin": 1024}

DEFAULT_COMPRESSOR = {"id": "zlib", "level": 1}


@dataclass(frozen=True)
class ArrayMeta:
    """Shape, chunking, dtype, fill and compression of one stored array."""

    shape: tuple[int, ...]
    chunks: tuple[int, ...]
    dtype: str
    fill_value: object = None
    compressor: Optional[dict] = None
    order: str = "C"

    def __post_init__(self):
        if len(self.shape) != len(self.chunks):
            raise ValueError(f"rank mismatch: shape {self.shape} vs chunks {self.chunks}")
        if any(c < 1 for c in self.chunks):
            raise ValueError(f"chunk extents must be >= 1, got {self.chunks}")
        if self.dtype not in SUPPORTED_DTYPES:
            raise ValueError(f"dtype {self.dtype!r} not one of {SUPPORTED_DTYPES}")
        if self.order != "C":
            raise ValueError("only C order is supported")
        if self.compressor is not None and self.compressor.get("id") != "zlib":
            raise ValueError(f"unsupported compressor {self.compressor!r}")

    @property
    def chunk_grid(self) -> tuple[int, ...]:
        return tuple(-(-s // c) for s, c in zip(self.shape, self.chunks))

    @property
    def n_chunk_files(self) -> int:
        return math.prod(self.chunk_grid)


@dataclass(frozen=True)
class StorePath:
    """Location of one array: store root, slash-separated group, name."""

    root: Union[str, Path]
    group: str = ""
    name: str = ""

    def __post_init__(self):
        for part in self.parts():
            if not _NAME_RE.match(part):
                raise ValueError(f"store path component {part!r} must match [A-Za-z0-9_]+")

    def parts(self) -> list[str]:
        parts = [p for p in self.group.split("/") if p]
        if self.name:
            parts.append(self.name)
        return parts

    def directory(self) -> Path:
        return Path(self.root).joinpath(*self.parts())


def _json_bytes(obj) -> bytes:
    return (json.dumps(obj, sort_keys=True, separators=(",", ": "), indent=4) + "\n").encode()


def _encode_fill(fill, dtype: str):
    if dtype == "|b1":
        return bool(fill) if fill is not None else False
    if dtype.startswith("<f"):
        if fill is None:
            return "NaN"
        f = float(fill)
        if math.isnan(f):
            return "NaN"
        if math.isinf(f):
            return "Infinity" if f > 0 else "-Infinity"
        return f
    return int(fill) if fill is not None else 0


def _decode_fill(raw, dtype: str):
    if raw == "NaN":
        return float("nan")
    if raw == "Infinity":
        return float("inf")
    if raw == "-Infinity":
        return float("-inf")
    if raw is None:
        return float("nan") if dtype.startswith("<f") else 0
    return raw


def _write_file(path: Path, payload: bytes) -> None:
    try:
        path.write_bytes(payload)
    except OSError as exc:
        raise IoFailure(f"cannot write {path}: {exc}") from exc


def write_array(
    path: StorePath,
    meta: ArrayMeta,
    data: np.ndarray,
    attrs: Optional[dict] = None,
) -> None:
    """Write one array: metadata, attributes, and every chunk file.

    Chunk payloads are deterministic: same data, chunking and compression
    settings always produce byte-identical files.
    """
    data = np.asarray(data)
    if data.shape != meta.shape:
        raise ShapeMismatch(f"data shape {data.shape} != declared {meta.shape}")
    dtype = np.dtype(meta.dtype)
    data = np.ascontiguousarray(data, dtype=dtype)

    target = path.directory()
    try:
        target.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise IoFailure(f"cannot create {target}: {exc}") from exc

    zarray = {
        "zarr_format": ZARR_FORMAT,
        "shape": list(meta.shape),
        "chunks": list(meta.chunks),
        "dtype": meta.dtype,
        "compressor": meta.compressor,
        "fill_value": _encode_fill(meta.fill_value, meta.dtype),
        "order": "C",
        "filters": None,
    }
    _write_file(target / ".zarray", _json_bytes(zarray))
    _write_file(target / ".zattrs", _json_bytes(attrs or {}))

    fill = _decode_fill(zarray["fill_value"], meta.dtype)
    level = meta.compressor["level"] if meta.compressor else None
    for idx in itertools.product(*(range(n) for n in meta.chunk_grid)):
        sel = tuple(
            slice(i * c, min((i + 1) * c, s))
            for i, c, s in zip(idx, meta.chunks, meta.shape)
        )
        block = data[sel]
        if block.shape != meta.chunks:
            padded = np.full(meta.chunks, fill, dtype=dtype)
            padded[tuple(slice(0, e) for e in block.shape)] = block
            block = padded
        payload = np.ascontiguousarray(block).tobytes(order="C")
        if level is not None:
            payload = zlib.compress(payload, level)
        _write_file(target / ".".join(map(str, idx)), payload)


def read_array(path: StorePath) -> tuple[ArrayMeta, np.ndarray, dict]:
    """Read one array back; absent chunk files decode as all-fill regions."""
    target = path.directory()
    meta_path = target / ".zarray"
    if not meta_path.is_file():
        raise CorruptMetadata(f"{meta_path} does not exist")
    try:
        raw = json.loads(meta_path.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise CorruptMetadata(f"cannot parse {meta_path}: {exc}") from exc

    if raw.get("zarr_format") != ZARR_FORMAT:
        raise CorruptMetadata(f"unsupported zarr_format {raw.get('zarr_format')!r}")
    dtype_str = raw.get("dtype")
    if dtype_str not in SUPPORTED_DTYPES:
        raise CorruptMetadata(f"unsupported dtype {dtype_str!r}")
    if raw.get("order", "C") != "C":
        raise CorruptMetadata("only C order is supported")
    if raw.get("filters") not in (None, []):
        raise CorruptMetadata("filters are not supported")
    compressor = raw.get("compressor")
    if compressor is not None and compressor.get("id") != "zlib":
        raise CorruptMetadata(f"unsupported compressor {compressor!r}")
    try:
        shape = tuple(int(s) for s in raw["shape"])
        chunks = tuple(int(c) for c in raw["chunks"])
        meta = ArrayMeta(
            shape=shape,
            chunks=chunks,
            dtype=dtype_str,
            fill_value=_decode_fill(raw.get("fill_value"), dtype_str),
            compressor=compressor,
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise CorruptMetadata(f"bad metadata in {meta_path}: {exc}") from exc

    dtype = np.dtype(dtype_str)
    fill = meta.fill_value
    try:
        data = np.full(shape, fill, dtype=dtype)
    except (TypeError, ValueError) as exc:
        raise CorruptMetadata(f"fill value {fill!r} invalid for dtype {dtype_str}") from exc
    chunk_bytes = math.prod(chunks) * dtype.itemsize
    for idx in itertools.product(*(range(n) for n in meta.chunk_grid)):
        chunk_path = target / ".".join(map(str, idx))
        if not chunk_path.is_file():
            continue
        payload = chunk_path.read_bytes()
        if compressor is not None:
            try:
                payload = zlib.decompress(payload)
            except zlib.error as exc:
                raise ChunkSizeMismatch(f"cannot decompress {chunk_path}: {exc}") from exc
        if len(payload) != chunk_bytes:
            raise ChunkSizeMismatch(
                f"{chunk_path}: {len(payload)} bytes, chunk needs {chunk_bytes}"
            )
        block = np.frombuffer(payload, dtype=dtype).reshape(chunks)
        sel = tuple(
            slice(i * c, min((i + 1) * c, s))
            for i, c, s in zip(idx, chunks, shape)
        )
        keep = tuple(slice(0, s.stop - s.start) for s in sel)
        data[sel] = block[keep]

    attrs_path = target / ".zattrs"
    attrs = json.loads(attrs_path.read_text()) if attrs_path.is_file() else {}
    return meta, data, attrs


def _dtype_string(dtype: np.dtype) -> str:
    mapping = {
        np.dtype(np.float64): "<f8",
        np.dtype(np.float32): "<f4",
        np.dtype(np.int64): "<i8",
        np.dtype(np.int16): "<i2",
        np.dtype(np.int8): "<i1",
        np.dtype(bool): "|b1",
    }
    try:
        return mapping[np.dtype(dtype)]
    except KeyError:
        raise ValueError(f"no store dtype for {dtype!r}") from None


def default_chunks(dims: tuple[str, ...], shape: tuple[int, ...]) -> tuple[int, ...]:
    """Per-dimension chunk extents: named caps, full extent otherwise."""
    out = []
    for d, s in zip(dims, shape):
        cap = DEFAULT_CHUNK_CAPS.get(d, s)
        out.append(max(1, min(cap, s) if s else 1))
    return tuple(out)


def _default_fill(dtype: str):
    if dtype.startswith("<f"):
        return float("nan")
    if dtype == "|b1":
        return False
    return 0


def _write_group_marker(directory: Path) -> None:
    try:
        directory.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise IoFailure(f"cannot create {directory}: {exc}") from exc
    _write_file(directory / ".zgroup", _json_bytes({"zarr_format": ZARR_FORMAT}))


def _write_group(
    root: Union[str, Path],
    name: str,
    group: Group,
    compressor: Optional[dict],
) -> None:
    directory = Path(root) / name if name else Path(root)
    _write_group_marker(directory)
    _write_file(directory / ".zattrs", _json_bytes(group.attrs))
    for array_name, var in group.arrays.items():
        dtype = _dtype_string(var.values.dtype)
        meta = ArrayMeta(
            shape=var.values.shape,
            chunks=default_chunks(var.dims, var.values.shape),
            dtype=dtype,
            fill_value=_default_fill(dtype),
            compressor=compressor,
        )
        attrs = {DIMENSIONS_ATTR: list(var.dims), **var.attrs}
        write_array(StorePath(root, name, array_name), meta, var.values, attrs)


def _read_group(directory: Path, root: Union[str, Path], group: str) -> Group:
    attrs_path = directory / ".zattrs"
    attrs = json.loads(attrs_path.read_text()) if attrs_path.is_file() else {}
    arrays = {}
    for child in sorted(p for p in directory.iterdir() if p.is_dir()):
        if not (child / ".zarray").is_file():
            continue
        _, values, raw_attrs = read_array(StorePath(root, group, child.name))
        dims = tuple(raw_attrs.pop(DIMENSIONS_ATTR, []))
        if len(dims) != values.ndim:
            dims = tuple(f"dim_{i}" for i in range(values.ndim))
        arrays[child.name] = Variable(dims, values, raw_attrs)
    return Group(arrays=arrays, attrs=attrs)


def write_echodata(
    ed: EchoData,
    root: Union[str, Path],
    compressor: Optional[dict] = DEFAULT_COMPRESSOR,
) -> None:
    """Write the seven-group dataset under ``root``."""
    root = Path(root)
    _write_group_marker(root)
    for name in GROUP_NAMES:
        _write_group(root, name, ed.groups[name], compressor)


def read_echodata(root: Union[str, Path]) -> EchoData:
    """Inverse of :func:`write_echodata`.

    Arrays found outside the seven known groups are folded into Vendor
    under ``<group>__<name>`` keys rather than dropped.
    """
    root = Path(root)
    if not root.is_dir():
        raise NotFound(f"store root {root} does not exist")
    groups = {}
    for name in GROUP_NAMES:
        directory = root / name
        if not directory.is_dir():
            raise MissingGroup(f"group directory {name!r} missing under {root}")
        groups[name] = _read_group(directory, root, name)

    ed = EchoData(groups=groups)
    for child in sorted(p for p in root.iterdir() if p.is_dir()):
        if child.name in GROUP_NAMES:
            continue
        foreign = _read_group(child, root, child.name)
        for array_name, var in foreign.arrays.items():
            ed.vendor.arrays[f"{child.name}__{array_name}"] = var
    return ed


# ---------------------------------------------------------------------------
# flat grid stores (calibrated Sv, MVBS, masks)
# ---------------------------------------------------------------------------

def write_grid_store(
    grid,
    root: Union[str, Path],
    value_name: str = "Sv",
    value_dtype: str = "<f4",
    compressor: Optional[dict] = DEFAULT_COMPRESSOR,
    attrs: Optional[dict] = None,
) -> None:
    """Write a calibrated grid (values + coordinates + range_m) at ``root``."""
    root = Path(root)
    _write_group_marker(root)
    _write_file(root / ".zattrs", _json_bytes(attrs or {}))

    def _put(name, dims, values, dtype, extra=None):
        meta = ArrayMeta(
            shape=values.shape,
            chunks=default_chunks(dims, values.shape),
            dtype=dtype,
            fill_value=_default_fill(dtype),
            compressor=compressor,
        )
        write_array(
            StorePath(root, "", name),
            meta,
            values,
            {DIMENSIONS_ATTR: list(dims), **(extra or {})},
        )

    _put(value_name, grid.dims, grid.values, value_dtype)
    _put("frequency", ("frequency",), grid.frequency_hz, "<f8", {"units": "Hz"})
    _put("ping_time", ("ping_time",), grid.ping_time, "<i8",
         {"units": "nanoseconds since 1970-01-01T00:00:00Z"})
    _put("range_bin", ("range_bin",), grid.range_bin, "<i8")
    _put("range_m", ("frequency", "range_bin"), grid.range_m, "<f8", {"units": "m"})


def read_grid_store(root: Union[str, Path], value_name: str = "Sv"):
    """Read a grid store written by :func:`write_grid_store`.

    Returns an ``SvGrid``; stored float32 values are widened to float64.
    """
    from .calibrate import SvGrid   # late import: calibrate builds on store

    root = Path(root)
    if not root.is_dir():
        raise NotFound(f"store root {root} does not exist")
    def _get(name):
        _, values, attrs = read_array(StorePath(root, "", name))
        return values
    values = _get(value_name).astype(np.float64)
    return SvGrid(
        frequency_hz=_get("frequency"),
        ping_time=_get("ping_time"),
        values=values,
        range_m=_get("range_m"),
    )


def write_mask_store(
    mask,
    root: Union[str, Path],
    compressor: Optional[dict] = DEFAULT_COMPRESSOR,
) -> None:
    """Write a boolean mask plus its ping_time coordinate at ``root``."""
    root = Path(root)
    _write_group_marker(root)
    _write_file(root / ".zattrs", _json_bytes(mask.attrs or {}))

    def _put(name, dims, values, dtype, extra=None):
        meta = ArrayMeta(
            shape=values.shape,
            chunks=default_chunks(dims, values.shape),
            dtype=dtype,
            fill_value=_default_fill(dtype),
            compressor=compressor,
        )
        write_array(
            StorePath(root, "", name), meta, values,
            {DIMENSIONS_ATTR: list(dims), **(extra or {})},
        )

    _put("mask", ("ping_time", "range_bin"), mask.values, "|b1")
    _put("ping_time", ("ping_time",), mask.ping_time, "<i8",
         {"units": "nanoseconds since 1970-01-01T00:00:00Z"})

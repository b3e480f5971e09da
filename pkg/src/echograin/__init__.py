"""echograin: echosounder raw files to standardized chunked-array datasets.

The pipeline runs convert -> qc -> calibrate -> mvbs / fdiff / metrics /
echogram, each stage a pure function over labeled arrays. See README.md
for the store layout and the CLI.
"""

__version__ = "0.1.0"

from . import calibrate, convert, datagram, metrics, model, process, store  # noqa: E402,F401
from .calibrate import CalParams, SvGrid, compute_range, compute_sv, compute_ts
from .convert import (
    BoundingBox,
    GeoTrack,
    convert_file,
    convert_raw,
    open_byte_source,
    parse_position,
    slice_by_position,
    track_from_echodata,
)
from .datagram import (
    Datagram,
    FixtureSpec,
    NmeaSentence,
    PingRecord,
    SonarConfig,
    TransducerConfig,
    generate_fixture,
    read_datagram,
    write_datagram,
)
from .metrics import MetricsRow, compute_metrics, write_metrics_csv
from .model import EchoData, LabeledGrid, Mask, align_ragged, build_echodata
from .process import (
    MvbsParams,
    TimeRepairReport,
    compute_mvbs,
    frequency_diff_mask,
    repair_time_reversals,
)
from .store import ArrayMeta, StorePath, read_array, read_echodata, write_array, write_echodata

__all__ = [
    "__version__",
    "ArrayMeta", "BoundingBox", "CalParams", "Datagram", "EchoData",
    "FixtureSpec", "GeoTrack", "LabeledGrid", "Mask", "MetricsRow",
    "MvbsParams", "NmeaSentence", "PingRecord", "SonarConfig", "StorePath",
    "SvGrid", "TimeRepairReport", "TransducerConfig",
    "align_ragged", "build_echodata", "compute_metrics", "compute_mvbs",
    "compute_range", "compute_sv", "compute_ts", "convert_file",
    "convert_raw", "frequency_diff_mask", "generate_fixture",
    "open_byte_source", "parse_position", "read_array", "read_datagram",
    "read_echodata", "repair_time_reversals", "slice_by_position",
    "track_from_echodata", "write_array", "write_datagram",
    "write_echodata", "write_metrics_csv",
]

"""Shared test helpers: fixture files, an HTTP server, and random grids."""

from __future__ import annotations

import threading
from functools import partial
from http.server import SimpleHTTPRequestHandler, ThreadingHTTPServer

import numpy as np
import pytest

from echograin.calibrate import SvGrid
from echograin.datagram import FixtureSpec, generate_fixture


@pytest.fixture
def fixture_file(tmp_path):
    """Write a generated fixture to disk; returns (path, truth)."""

    def _make(spec: FixtureSpec, name: str = "fixture.raw"):
        data, truth = generate_fixture(spec)
        path = tmp_path / name
        path.write_bytes(data)
        return path, truth

    return _make


class _QuietHandler(SimpleHTTPRequestHandler):
    def log_message(self, *args):
        pass


@pytest.fixture
def http_server(tmp_path):
    """Serve ``tmp_path`` over HTTP; yields the base URL."""
    handler = partial(_QuietHandler, directory=str(tmp_path))
    server = ThreadingHTTPServer(("127.0.0.1", 0), handler)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    try:
        yield f"http://127.0.0.1:{server.server_address[1]}"
    finally:
        server.shutdown()
        thread.join(timeout=5)


def random_sv_grid(
    rng: np.random.Generator,
    n_f: int = 2,
    n_t: int = 12,
    n_r: int = 30,
    nan_fraction: float = 0.1,
    shared_range: bool = False,
) -> SvGrid:
    """Random calibrated-looking grid for processing/metrics tests."""
    freqs = np.sort(rng.choice(np.arange(1, 40) * 1e4, size=n_f, replace=False))
    t0 = 1_496_275_200_000_000_000
    gaps = rng.integers(1, 4, size=n_t).cumsum() * 10**9
    times = t0 + gaps
    values = rng.uniform(-90.0, -20.0, size=(n_f, n_t, n_r))
    if nan_fraction:
        values[rng.random(values.shape) < nan_fraction] = np.nan
    if shared_range:
        spacing = float(rng.uniform(0.02, 0.3))
        ranges = np.tile((np.arange(n_r) + 0.5) * spacing, (n_f, 1))
    else:
        spacings = rng.uniform(0.02, 0.3, size=n_f)
        ranges = (np.arange(n_r) + 0.5)[None, :] * spacings[:, None]
    return SvGrid(
        frequency_hz=freqs,
        ping_time=times,
        values=values,
        range_m=ranges,
    )

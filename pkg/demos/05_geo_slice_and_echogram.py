"""Select pings by geographic region and render a quick-look echogram.

Each ping is matched to the nearest-in-time GPS fix; a bounding box then
selects the pings whose position falls inside. The echogram is a raw
RGB raster (no axes), one column per ping, shallowest range on top.
"""

import tempfile
from pathlib import Path

from PIL import Image

from echograin import (
    BoundingBox,
    FixtureSpec,
    build_echodata,
    compute_sv,
    generate_fixture,
    slice_by_position,
    track_from_echodata,
)
from echograin.cli import load_palette, render_echogram


def main():
    _, truth = generate_fixture(
        FixtureSpec(
            seed=47, n_channels=2, n_pings=360, count_range=(200, 320),
            n_nmea=40, track_start=(47.0, -125.0), track_step=(0.005, 0.004),
        )
    )
    ed = build_echodata(truth.config, truth.pings, truth.nmea)
    track = track_from_echodata(ed)
    print(f"track: {len(track)} fixes, "
          f"lat {track.latitude_deg.min():.3f}..{track.latitude_deg.max():.3f}, "
          f"lon {track.longitude_deg.min():.3f}..{track.longitude_deg.max():.3f}")

    sv = compute_sv(ed)
    bbox = BoundingBox(lat_min=47.04, lat_max=47.13, lon_min=-125.0, lon_max=-124.85)
    inside = slice_by_position(sv, track, bbox)
    print(f"pings inside the box: {inside.shape[1]} of {sv.shape[1]}")

    palette = load_palette()
    pixels = render_echogram(sv.values[0], vmin=-80.0, vmax=-30.0, palette=palette)
    out = Path(tempfile.mkdtemp(prefix="echograin_demo_")) / "echogram.png"
    Image.fromarray(pixels, mode="RGB").save(out, format="PNG")
    print(f"echogram {pixels.shape[1]} x {pixels.shape[0]} px -> {out}")

    used = {tuple(c) for c in pixels.reshape(-1, 3)}
    print(f"distinct colors used: {len(used)} (palette has {len(palette.colors)} + below + nan)")


if __name__ == "__main__":
    main()

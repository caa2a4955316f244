"""Binary PPM/PGM output for temperature and coverage maps.

Pixels sample the field at their centres, row 0 is the top (largest y).
Output bytes depend only on the field values, never on timing or workers.
"""

from __future__ import annotations

from pathlib import Path
from typing import Sequence

import numpy as np

from .geometry import Rect

# colour ramp from the coolest to the hottest value
RAMP = np.array([
    [0, 0, 160],
    [0, 90, 255],
    [0, 220, 220],
    [120, 230, 40],
    [255, 220, 0],
    [255, 90, 0],
    [180, 0, 0],
], dtype=float)


def _pixel_size(width: int, height: int, size: int) -> tuple[int, int]:
    if width >= height:
        return size, max(1, round(size * height / width))
    return max(1, round(size * width / height)), size


def rasterize(field, layer: int, size: int = 256) -> np.ndarray:
    """Sample one layer of a TemperatureField onto a pixel raster (K)."""
    g = field.grid
    fp = g.stack.footprint
    w, h = _pixel_size(fp.width, fp.height, size)
    px = fp.x0 + (np.arange(w) + 0.5) * (fp.width / w)
    py = fp.y0 + (np.arange(h) + 0.5) * (fp.height / h)
    out = np.full((h, w), np.nan)
    start, stop = g.layer_meshes[layer]
    for m in g.meshes[start:stop]:
        cols = np.flatnonzero((px >= m.xb[0]) & (px < m.xb[-1]))
        rows = np.flatnonzero((py >= m.yb[0]) & (py < m.yb[-1]))
        if not len(cols) or not len(rows):
            continue
        ix = np.clip(np.searchsorted(m.xb, px[cols], side="right") - 1, 0, m.nx - 1)
        iy = np.clip(np.searchsorted(m.yb, py[rows], side="right") - 1, 0, m.ny - 1)
        cells = m.offset + iy[:, None] * m.nx + ix[None, :]
        out[np.ix_(rows, cols)] = field.values[cells]
    return out[::-1]


def colorize(values: np.ndarray, lo: float, hi: float) -> np.ndarray:
    """Map values linearly from [lo, hi] onto RAMP; a flat field maps to the first colour."""
    span = hi - lo
    t = np.zeros_like(values) if span <= 0 else np.clip((values - lo) / span, 0.0, 1.0)
    pos = t * (len(RAMP) - 1)
    k = np.minimum(pos.astype(int), len(RAMP) - 2)
    f = (pos - k)[..., None]
    rgb = RAMP[k] * (1 - f) + RAMP[k + 1] * f
    return np.rint(rgb).astype(np.uint8)


def write_ppm(path: str | Path, rgb: np.ndarray) -> None:
    h, w, _ = rgb.shape
    with open(path, "wb") as f:
        f.write(b"P6\n%d %d\n255\n" % (w, h))
        f.write(np.ascontiguousarray(rgb, dtype=np.uint8).tobytes())


def write_pgm(path: str | Path, gray: np.ndarray) -> None:
    h, w = gray.shape
    with open(path, "wb") as f:
        f.write(b"P5\n%d %d\n255\n" % (w, h))
        f.write(np.ascontiguousarray(gray, dtype=np.uint8).tobytes())


def read_pnm(path: str | Path) -> np.ndarray:
    """Read back a P5/P6 file written by this module."""
    data = Path(path).read_bytes()
    magic, w, h, maxval, rest = data.split(maxsplit=4)
    w, h = int(w), int(h)
    if magic == b"P6":
        return np.frombuffer(rest, dtype=np.uint8).reshape(h, w, 3)
    return np.frombuffer(rest, dtype=np.uint8).reshape(h, w)


def emit_heatmap(field, layer: int, path: str | Path, size: int = 256) -> tuple[float, float]:
    """Write ``path`` (PPM) and a legend next to it; returns (min, max) in K."""
    path = Path(path)
    cells = field.grid.layer_cells(layer)
    vals = field.values[cells]
    lo, hi = float(vals.min()), float(vals.max())
    raster = rasterize(field, layer, size)
    write_ppm(path, colorize(raster, lo, hi))
    lines = [f"layer {field.grid.stack.layers[layer].name}",
             f"min_K {lo:.6f}", f"max_K {hi:.6f}",
             "ramp " + " ".join("#%02x%02x%02x" % tuple(int(c) for c in row) for row in RAMP)]
    path.with_suffix(".txt").write_text("\n".join(lines) + "\n")
    return lo, hi


def rho_raster(tiles: Sequence, window: Rect, size: int = 256) -> np.ndarray:
    """Grayscale coverage map: 0 for empty tiles, 255 for fully covered ones."""
    w, h = _pixel_size(window.width, window.height, size)
    px = window.x0 + (np.arange(w) + 0.5) * (window.width / w)
    py = window.y0 + (np.arange(h) + 0.5) * (window.height / h)
    out = np.zeros((h, w))
    for t in tiles:
        r = t.region
        cols = (px >= r.x0) & (px < r.x1)
        rows = (py >= r.y0) & (py < r.y1)
        out[np.ix_(rows, cols)] = t.rho
    return np.rint(out[::-1] * 255).astype(np.uint8)

"""Quadtree tiling of a layout layer into tiles with overlap ratios."""

from __future__ import annotations

import csv
import io
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Sequence

from .errors import InputError
from .geometry import Rect, SpatialIndex, overlap_area
from .materials import Material, MixingRule, effective_material, mix_parallel_series
from .stack import FloorplanElement


@dataclass(frozen=True)
class TilingConfig:
    i_max: int = 6
    rho_lo: float = 0.02
    rho_hi: float = 0.98

    def __post_init__(self):
        if self.i_max < 0:
            raise InputError(f"i_max must be >= 0, got {self.i_max}")
        if not 0.0 <= self.rho_lo < self.rho_hi <= 1.0:
            raise InputError(f"need 0 <= rho_lo < rho_hi <= 1, got {self.rho_lo}, {self.rho_hi}")

    def satisfied(self, covered: Fraction, area: int) -> bool:
        """Purity stop rule, evaluated exactly on the covered area."""
        return covered <= Fraction(self.rho_lo) * area or covered >= Fraction(self.rho_hi) * area


@dataclass(frozen=True)
class Tile:
    region: Rect
    covered: Fraction
    depth: int

    @property
    def rho(self) -> float:
        return float(self.covered / self.region.area)


def tile_sort_key(t: Tile):
    r = t.region
    return (r.y0, r.x0, r.y1, r.x1)


def split_quad(region: Rect) -> tuple[Rect, Rect, Rect, Rect]:
    """Split at the floor midpoints; order is SW, SE, NW, NE.

    The caller must not pass a region narrower than 2 units on either axis.
    """
    if region.width < 2 or region.height < 2:
        raise InputError(f"region {region.as_tuple()} is too small to split")
    xm = region.x0 + region.width // 2
    ym = region.y0 + region.height // 2
    x0, y0, x1, y1 = region.as_tuple()
    return (Rect(x0, y0, xm, ym), Rect(xm, y0, x1, ym),
            Rect(x0, ym, xm, y1), Rect(xm, ym, x1, y1))


def region_coverage(index: SpatialIndex, region: Rect) -> Fraction:
    return overlap_area(region, index.query_items(region))


def subdivide(index: SpatialIndex, region: Rect, depth: int, cfg: TilingConfig,
              out: list[Tile] | None = None) -> list[Tile]:
    """Recursive quadtree step; appends leaf tiles to ``out`` and returns it.

    Regions that cannot be split any further (an extent of 1 unit) are
    emitted as leaves regardless of purity.
    """
    if out is None:
        out = []
    covered = region_coverage(index, region)
    if (cfg.satisfied(covered, region.area) or depth >= cfg.i_max
            or region.width < 2 or region.height < 2):
        out.append(Tile(region, covered, depth))
        return out
    for q in split_quad(region):
        subdivide(index, q, depth + 1, cfg, out)
    return out


def generate_tiles(index: SpatialIndex, window: Rect, cfg: TilingConfig,
                   workers: int = 1) -> list[Tile]:
    """Partition ``window`` into quadtree tiles.

    With ``workers > 1`` the four root quadrants are processed concurrently.
    The result is sorted by region, so it does not depend on ``workers``.
    """
    covered = region_coverage(index, window)
    if (workers <= 1 or cfg.satisfied(covered, window.area) or cfg.i_max == 0
            or window.width < 2 or window.height < 2):
        tiles = subdivide(index, window, 0, cfg)
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = pool.map(lambda q: subdivide(index, q, 1, cfg), split_quad(window))
            tiles = [t for part in parts for t in part]
    tiles.sort(key=tile_sort_key)
    return tiles


def tiles_to_floorplan(tiles: Sequence[Tile], feature: Material, fill: Material,
                       rule: MixingRule = mix_parallel_series,
                       prefix: str = "tile") -> list[FloorplanElement]:
    cache: dict[Fraction, Material] = {}
    elements = []
    for i, t in enumerate(tiles):
        key = t.covered / t.region.area
        mat = cache.get(key)
        if mat is None:
            mat = cache[key] = effective_material(float(key), feature, fill, rule)
        elements.append(FloorplanElement(f"{prefix}{i}", t.region, mat))
    return elements


def tiles_csv(tiles: Iterable[Tile]) -> str:
    """CSV text ``x0,y0,x1,y1,rho`` with coordinates in micrometres."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["x0", "y0", "x1", "y1", "rho"])
    for t in tiles:
        r = t.region
        w.writerow([f"{r.x0 / 1000:.3f}", f"{r.y0 / 1000:.3f}", f"{r.x1 / 1000:.3f}",
                    f"{r.y1 / 1000:.3f}", f"{t.rho:.6f}"])
    return buf.getvalue()

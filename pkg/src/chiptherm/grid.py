"""Uniform and temperature-aware non-uniform thermal grids.

Every floorplan element is meshed as its own tensor-product block of
equal-or-clipped cells, so cells never straddle element borders. Blocks
couple laterally and vertically through exact face overlaps, which allows
non-conforming interfaces between differently refined neighbours. Each
simulation layer is one cell thick.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Mapping, Optional

import numpy as np

from .errors import InputError
from .geometry import SpatialIndex
from .materials import Material
from .stack import FloorplanElement, StackDescription

NM = 1e-9
_TOL_NM = 1e-6


@dataclass(frozen=True)
class ElementMesh:
    """Cell block of one element: break coordinates in nm, cells row-major."""

    layer: int
    element: int
    xb: np.ndarray
    yb: np.ndarray
    offset: int

    @property
    def nx(self) -> int:
        return len(self.xb) - 1

    @property
    def ny(self) -> int:
        return len(self.yb) - 1

    @property
    def n(self) -> int:
        return self.nx * self.ny

    @property
    def cells(self) -> np.ndarray:
        return np.arange(self.offset, self.offset + self.n)

    def same_cells(self, other: "ElementMesh") -> bool:
        return (self.nx == other.nx and self.ny == other.ny
                and np.array_equal(self.xb, other.xb) and np.array_equal(self.yb, other.yb))


@dataclass(frozen=True)
class Cell:
    index: int
    layer: int
    element: int
    x0: float
    y0: float
    x1: float
    y1: float
    thickness: float
    material: Material

    @property
    def center(self) -> tuple[float, float]:
        return (0.5 * (self.x0 + self.x1), 0.5 * (self.y0 + self.y1))

    @property
    def area(self) -> float:
        return (self.x1 - self.x0) * (self.y1 - self.y0)

    @property
    def volume(self) -> float:
        return self.area * self.thickness

    def extent(self, axis: int) -> float:
        return (self.x1 - self.x0, self.y1 - self.y0, self.thickness)[axis]


@dataclass(frozen=True)
class RefineConfig:
    """Parameters of the gradient-driven grid size rule (SI units).

    ``per_axis`` uses the x and y components of the gradient separately
    instead of the gradient magnitude for both directions.
    """

    g_base: float
    l_min: float
    alpha: float = 1.0
    epsilon: float = 1e-9
    per_axis: bool = False
    passes: int = 1

    def __post_init__(self):
        if not (self.alpha > 0 and self.g_base > 0 and self.epsilon > 0 and self.l_min > 0):
            raise InputError("RefineConfig needs alpha, g_base, epsilon, l_min > 0")
        if self.passes < 1:
            raise InputError("RefineConfig.passes must be >= 1")


@dataclass(frozen=True, eq=False)
class ThermalGrid:
    stack: StackDescription
    meshes: tuple[ElementMesh, ...]
    layer_meshes: tuple[tuple[int, int], ...]   # [start, stop) into meshes per layer
    layer: np.ndarray
    mesh: np.ndarray                            # owning ElementMesh index per cell
    x0: np.ndarray
    x1: np.ndarray
    y0: np.ndarray
    y1: np.ndarray
    dz: np.ndarray
    adj_a: np.ndarray
    adj_b: np.ndarray
    adj_area: np.ndarray
    adj_axis: np.ndarray
    sink_cells: np.ndarray
    sink_area: np.ndarray
    gridsizes: Optional[Mapping] = field(default=None, compare=False)

    @property
    def n(self) -> int:
        return len(self.layer)

    @property
    def n_layers(self) -> int:
        return len(self.stack.layers)

    @property
    def area(self) -> np.ndarray:
        return (self.x1 - self.x0) * (self.y1 - self.y0)

    @property
    def volume(self) -> np.ndarray:
        return self.area * self.dz

    @property
    def xc(self) -> np.ndarray:
        return 0.5 * (self.x0 + self.x1)

    @property
    def yc(self) -> np.ndarray:
        return 0.5 * (self.y0 + self.y1)

    def element_of(self, m: ElementMesh) -> FloorplanElement:
        return self.stack.layers[m.layer].elements[m.element]

    def mesh_for(self, layer: int, element: int) -> ElementMesh:
        start, stop = self.layer_meshes[layer]
        m = self.meshes[start + element]
        assert m.element == element
        return m

    def layer_cells(self, layer: int) -> np.ndarray:
        start, stop = self.layer_meshes[layer]
        a = self.meshes[start].offset
        last = self.meshes[stop - 1]
        return np.arange(a, last.offset + last.n)

    def cells_per_layer(self) -> list[int]:
        return [len(self.layer_cells(j)) for j in range(self.n_layers)]

    def material_arrays(self):
        """Per-cell (k_inplane, k_vertical, density*heat_capacity)."""
        kin = np.empty(len(self.meshes))
        kv = np.empty(len(self.meshes))
        rc = np.empty(len(self.meshes))
        for i, m in enumerate(self.meshes):
            mat = self.element_of(m).material
            kin[i], kv[i], rc[i] = mat.k_inplane, mat.k_vertical, mat.volumetric_heat_capacity
        return kin[self.mesh], kv[self.mesh], rc[self.mesh]

    def cell(self, i: int) -> Cell:
        m = self.meshes[self.mesh[i]]
        return Cell(int(i), int(self.layer[i]), m.element, float(self.x0[i]), float(self.y0[i]),
                    float(self.x1[i]), float(self.y1[i]), float(self.dz[i]),
                    self.element_of(m).material)

    def locate(self, x: float, y: float, layer: int) -> int:
        """Index of the cell of ``layer`` containing point (x, y) in metres."""
        cells = self.layer_cells(layer)
        hit = cells[(self.x0[cells] <= x) & (x <= self.x1[cells])
                    & (self.y0[cells] <= y) & (y <= self.y1[cells])]
        if not len(hit):
            raise InputError(f"point ({x}, {y}) lies outside layer {layer}")
        return int(hit[0])

    def dump_cells_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["id", "layer", "x0_um", "y0_um", "x1_um", "y1_um", "material"])
        names = [self.element_of(m).material.name for m in self.meshes]
        for i in range(self.n):
            w.writerow([i, self.stack.layers[self.layer[i]].name,
                        f"{self.x0[i] * 1e6:.6f}", f"{self.y0[i] * 1e6:.6f}",
                        f"{self.x1[i] * 1e6:.6f}", f"{self.y1[i] * 1e6:.6f}", names[self.mesh[i]]])
        return buf.getvalue()

    def dump_adjacency_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["a", "b", "area_m2", "axis"])
        for a, b, s, ax in zip(self.adj_a, self.adj_b, self.adj_area, self.adj_axis):
            w.writerow([a, b, repr(float(s)), "xyz"[ax]])
        return buf.getvalue()


# --- construction ------------------------------------------------------------

def interval_pairs(b1: np.ndarray, b2: np.ndarray):
    """Overlapping intervals between two break sequences.

    Returns index arrays ``(i1, i2)`` and overlap lengths for every pair of
    intervals ``[b1[i1], b1[i1+1]]`` and ``[b2[i2], b2[i2+1]]`` that overlap
    by more than a sub-femtometre tolerance.
    """
    lo = max(b1[0], b2[0])
    hi = min(b1[-1], b2[-1])
    if hi - lo <= _TOL_NM:
        e = np.empty(0, dtype=np.int64)
        return e, e, np.empty(0)
    pts = np.concatenate([b1, b2])
    pts = np.unique(pts[(pts > lo) & (pts < hi)])
    pts = np.concatenate([[lo], pts, [hi]])
    seg = np.diff(pts)
    keep = seg > _TOL_NM
    mid = 0.5 * (pts[:-1] + pts[1:])[keep]
    i1 = np.clip(np.searchsorted(b1, mid) - 1, 0, len(b1) - 2)
    i2 = np.clip(np.searchsorted(b2, mid) - 1, 0, len(b2) - 2)
    return i1, i2, seg[keep]


def mesh_overlaps(ma: ElementMesh, mb: ElementMesh):
    """Cell index pairs and overlapping footprint areas (nm^2) of two blocks."""
    ix_a, ix_b, lx = interval_pairs(ma.xb, mb.xb)
    iy_a, iy_b, ly = interval_pairs(ma.yb, mb.yb)
    if not len(lx) or not len(ly):
        e = np.empty(0, dtype=np.int64)
        return e, e, np.empty(0)
    ca = ma.offset + iy_a[:, None] * ma.nx + ix_a[None, :]
    cb = mb.offset + iy_b[:, None] * mb.nx + ix_b[None, :]
    return ca.ravel(), cb.ravel(), (ly[:, None] * lx[None, :]).ravel()


def _breaks(lo: int, hi: int, n: int) -> np.ndarray:
    length = hi - lo
    return np.array([lo + (length * i) / n for i in range(n)] + [hi], dtype=float)


def _clipped_breaks(lo: int, hi: int, lines: np.ndarray) -> np.ndarray:
    inner = lines[(lines > lo + _TOL_NM) & (lines < hi - _TOL_NM)]
    return np.concatenate([[float(lo)], inner, [float(hi)]])


def _cells_along(length_m: float, gridsize: float) -> int:
    return max(1, math.ceil(length_m / gridsize - 1e-9))


def _lateral_pairs(meshes, elems, layer_dz):
    """Adjacencies between blocks of one layer that share an edge."""
    out_a, out_b, out_s, out_ax = [], [], [], []
    for axis in (0, 1):
        lo_attr, hi_attr = ("x0", "x1") if axis == 0 else ("y0", "y1")
        right_of: dict[int, list[int]] = {}
        for k, e in enumerate(elems):
            right_of.setdefault(getattr(e.rect, lo_attr), []).append(k)
        for k, e in enumerate(elems):
            for k2 in right_of.get(getattr(e.rect, hi_attr), ()):
                ma, mb = meshes[k], meshes[k2]
                if axis == 0:
                    i_a, i_b, seg = interval_pairs(ma.yb, mb.yb)
                    ca = ma.offset + i_a * ma.nx + (ma.nx - 1)
                    cb = mb.offset + i_b * mb.nx
                else:
                    i_a, i_b, seg = interval_pairs(ma.xb, mb.xb)
                    ca = ma.offset + (ma.ny - 1) * ma.nx + i_a
                    cb = mb.offset + i_b
                if len(seg):
                    out_a.append(ca)
                    out_b.append(cb)
                    out_s.append(seg * NM * layer_dz)
                    out_ax.append(np.full(len(seg), axis))
    return out_a, out_b, out_s, out_ax


def _internal_pairs(m: ElementMesh, dz: float):
    nx, ny = m.nx, m.ny
    idx = np.arange(m.n).reshape(ny, nx) + m.offset
    dy = np.diff(m.yb) * NM
    dx = np.diff(m.xb) * NM
    a = [idx[:, :-1].ravel(), idx[:-1, :].ravel()]
    b = [idx[:, 1:].ravel(), idx[1:, :].ravel()]
    s = [np.repeat(dy * dz, nx - 1), np.tile(dx * dz, ny - 1)]
    ax = [np.zeros(len(a[0]), dtype=int), np.ones(len(a[1]), dtype=int)]
    return a, b, s, ax


def _vertical_pairs(meshes_lo, meshes_hi, elems_lo, elems_hi):
    out_a, out_b, out_s = [], [], []
    if len(meshes_lo) == len(meshes_hi) and all(
            ea.rect == eb.rect and ma.same_cells(mb)
            for ea, eb, ma, mb in zip(elems_lo, elems_hi, meshes_lo, meshes_hi)):
        for ma, mb in zip(meshes_lo, meshes_hi):
            out_a.append(ma.cells)
            out_b.append(mb.cells)
            out_s.append(np.outer(np.diff(ma.yb), np.diff(ma.xb)).ravel() * NM * NM)
        return out_a, out_b, out_s
    index = SpatialIndex([e.rect for e in elems_hi])
    for ka, ea in enumerate(elems_lo):
        for kb in index.query(ea.rect):
            if ea.rect.overlap(elems_hi[kb].rect) == 0:
                continue
            ca, cb, s = mesh_overlaps(meshes_lo[ka], meshes_hi[kb])
            if len(s):
                out_a.append(ca)
                out_b.append(cb)
                out_s.append(s * NM * NM)
    return out_a, out_b, out_s


def _cat(parts, dtype=float):
    return np.concatenate(parts).astype(dtype) if parts else np.empty(0, dtype=dtype)


def build_grid(stack: StackDescription, breaks: Mapping[tuple[int, int], tuple[np.ndarray, np.ndarray]],
               gridsizes: Optional[Mapping] = None) -> ThermalGrid:
    """Assemble a grid from explicit per-element break coordinates (nm)."""
    meshes: list[ElementMesh] = []
    layer_meshes = []
    offset = 0
    for j, layer in enumerate(stack.layers):
        start = len(meshes)
        for i, e in enumerate(layer.elements):
            xb, yb = breaks[(j, i)]
            xb = np.asarray(xb, dtype=float)
            yb = np.asarray(yb, dtype=float)
            if xb[0] != e.rect.x0 or xb[-1] != e.rect.x1 or yb[0] != e.rect.y0 or yb[-1] != e.rect.y1:
                raise InputError(f"breaks of element {e.name!r} do not span the element")
            xb.setflags(write=False)
            yb.setflags(write=False)
            m = ElementMesh(j, i, xb, yb, offset)
            meshes.append(m)
            offset += m.n
        layer_meshes.append((start, len(meshes)))

    n = offset
    layer_arr = np.empty(n, dtype=np.int64)
    mesh_arr = np.empty(n, dtype=np.int64)
    x0 = np.empty(n)
    x1 = np.empty(n)
    y0 = np.empty(n)
    y1 = np.empty(n)
    dz = np.empty(n)
    for k, m in enumerate(meshes):
        sl = slice(m.offset, m.offset + m.n)
        X0, Y0 = np.meshgrid(m.xb[:-1], m.yb[:-1])
        X1, Y1 = np.meshgrid(m.xb[1:], m.yb[1:])
        x0[sl], x1[sl], y0[sl], y1[sl] = X0.ravel() * NM, X1.ravel() * NM, Y0.ravel() * NM, Y1.ravel() * NM
        layer_arr[sl] = m.layer
        mesh_arr[sl] = k
        dz[sl] = stack.layers[m.layer].thickness

    A, B, S, AX = [], [], [], []
    for j, layer in enumerate(stack.layers):
        lm = meshes[slice(*layer_meshes[j])]
        for m in lm:
            a, b, s, ax = _internal_pairs(m, layer.thickness)
            A += a
            B += b
            S += s
            AX += ax
        a, b, s, ax = _lateral_pairs(lm, layer.elements, layer.thickness)
        A += a
        B += b
        S += s
        AX += ax
        if j + 1 < len(stack.layers):
            a, b, s = _vertical_pairs(lm, meshes[slice(*layer_meshes[j + 1])],
                                      layer.elements, stack.layers[j + 1].elements)
            A += a
            B += b
            S += s
            AX += [np.full(len(x), 2) for x in a]
    adj_a = _cat(A, np.int64)
    adj_b = _cat(B, np.int64)
    adj_area = _cat(S)
    adj_axis = _cat(AX, np.int64)
    lo = np.minimum(adj_a, adj_b)
    hi = np.maximum(adj_a, adj_b)
    order = np.lexsort((adj_axis, hi, lo))
    adj_a, adj_b, adj_area, adj_axis = lo[order], hi[order], adj_area[order], adj_axis[order]

    sink_layer = len(stack.layers) - 1 if stack.sink.face == "top" else 0
    start, stop = layer_meshes[sink_layer]
    sink_cells = np.arange(meshes[start].offset, meshes[stop - 1].offset + meshes[stop - 1].n)
    sink_area = (x1 - x0)[sink_cells] * (y1 - y0)[sink_cells]

    arrays = [layer_arr, mesh_arr, x0, x1, y0, y1, dz, adj_a, adj_b, adj_area, adj_axis,
              sink_cells, sink_area]
    for arr in arrays:
        arr.setflags(write=False)
    return ThermalGrid(stack, tuple(meshes), tuple(layer_meshes), *arrays,
                       gridsizes=dict(gridsizes) if gridsizes is not None else None)


def build_uniform_grid(stack: StackDescription, nx: int, ny: int) -> ThermalGrid:
    """``nx`` x ``ny`` global grid per layer, clipped at element borders."""
    if nx < 1 or ny < 1:
        raise InputError(f"grid size must be >= 1, got {nx}x{ny}")
    fp = stack.footprint
    xs = _breaks(fp.x0, fp.x1, nx)
    ys = _breaks(fp.y0, fp.y1, ny)
    breaks = {}
    for j, layer in enumerate(stack.layers):
        for i, e in enumerate(layer.elements):
            r = e.rect
            breaks[(j, i)] = (_clipped_breaks(r.x0, r.x1, xs), _clipped_breaks(r.y0, r.y1, ys))
    return build_grid(stack, breaks)


def build_nonuniform_grid(stack: StackDescription,
                          gridsizes: Mapping[tuple[int, int], tuple[float, float]]) -> ThermalGrid:
    """Mesh each element with ``ceil(l / gridsize)`` equal cells per axis.

    ``gridsizes`` maps ``(layer index, element index)`` to ``(gx, gy)`` in
    metres; missing elements get a single cell.
    """
    breaks = {}
    for j, layer in enumerate(stack.layers):
        for i, e in enumerate(layer.elements):
            r = e.rect
            gx, gy = gridsizes.get((j, i), (r.width * NM, r.height * NM))
            nx = _cells_along(r.width * NM, gx)
            ny = _cells_along(r.height * NM, gy)
            breaks[(j, i)] = (_breaks(r.x0, r.x1, nx), _breaks(r.y0, r.y1, ny))
    return build_grid(stack, breaks, gridsizes)


# --- gradient-driven refinement ----------------------------------------------

class _SideMeans:
    """Area-weighted neighbour temperatures on either side of each cell."""

    def __init__(self, grid: ThermalGrid, axis: int):
        sel = grid.adj_axis == axis
        a, b, s = grid.adj_a[sel], grid.adj_b[sel], grid.adj_area[sel]
        c = grid.xc if axis == 0 else grid.yc
        a_first = c[a] < c[b]
        self.lo_cell = np.where(a_first, a, b)   # the cell on the negative side
        self.hi_cell = np.where(a_first, b, a)
        self.w = s
        self.coord = c
        self.n = grid.n

    def sides(self, T: np.ndarray):
        n = self.n
        w = self.w
        # hi_cell sees lo_cell on its minus side, and vice versa
        wm = np.bincount(self.hi_cell, w, n)
        tm = np.bincount(self.hi_cell, w * T[self.lo_cell], n)
        xm = np.bincount(self.hi_cell, w * self.coord[self.lo_cell], n)
        wp = np.bincount(self.lo_cell, w, n)
        tp = np.bincount(self.lo_cell, w * T[self.hi_cell], n)
        xp = np.bincount(self.lo_cell, w * self.coord[self.hi_cell], n)
        with np.errstate(invalid="ignore", divide="ignore"):
            return wm > 0, tm / wm, xm / wm, wp > 0, tp / wp, xp / wp


def _cross_border_gradient(cells, T, side: _SideMeans):
    has_m, tm, xm, has_p, tp, xp = side.sides(T)
    g = np.zeros(len(cells))
    for k, c in enumerate(cells):
        tc, xc = T[c], side.coord[c]
        if has_m[c] and has_p[c]:
            g[k] = (tp[c] - tm[c]) / (xp[c] - xm[c])
        elif has_p[c]:
            g[k] = (tp[c] - tc) / (xp[c] - xc)
        elif has_m[c]:
            g[k] = (tc - tm[c]) / (xc - xm[c])
    return g


def _element_gradients(T: np.ndarray, grid: ThermalGrid, m: ElementMesh, sides):
    cells = m.cells
    t = T[cells].reshape(m.ny, m.nx)
    xc = 0.5 * (m.xb[:-1] + m.xb[1:]) * NM
    yc = 0.5 * (m.yb[:-1] + m.yb[1:]) * NM
    if m.nx >= 2:
        gx = np.gradient(t, xc, axis=1).ravel()
    else:
        gx = _cross_border_gradient(cells, T, sides[0])
    if m.ny >= 2:
        gy = np.gradient(t, yc, axis=0).ravel()
    else:
        gy = _cross_border_gradient(cells, T, sides[1])
    return gx, gy


def element_gradient(field, layer: int, element: int, components: bool = False):
    """Mean in-plane temperature gradient magnitude over an element (K/m).

    With ``components=True`` returns ``(G, mean |dT/dx|, mean |dT/dy|)``.
    """
    grid = field.grid
    sides = (_SideMeans(grid, 0), _SideMeans(grid, 1))
    return _gradient_for(field.values, grid, grid.mesh_for(layer, element), sides, components)


def _gradient_for(T, grid, m, sides, components=False):
    gx, gy = _element_gradients(T, grid, m, sides)
    G = float(np.mean(np.hypot(gx, gy)))
    if components:
        return G, float(np.mean(np.abs(gx))), float(np.mean(np.abs(gy)))
    return G


def all_element_gradients(field) -> dict[tuple[int, int], tuple[float, float, float]]:
    grid = field.grid
    sides = (_SideMeans(grid, 0), _SideMeans(grid, 1))
    return {(m.layer, m.element): _gradient_for(field.values, grid, m, sides, True)
            for m in grid.meshes}


def refine_gridsize(e: FloorplanElement, G: float, cfg: RefineConfig,
                    G_y: Optional[float] = None) -> tuple[float, float]:
    """Grid size per axis: ``l * alpha * G_base / (G + eps)`` clamped to [l_min, l].

    ``G_y`` overrides the gradient used for the y direction.
    """
    out = []
    for l, g in ((e.rect.width * NM, G), (e.rect.height * NM, G if G_y is None else G_y)):
        raw = l * cfg.alpha * (cfg.g_base / (g + cfg.epsilon))
        out.append(min(max(raw, cfg.l_min), l))
    return out[0], out[1]


def gridsizes_from_field(field, cfg: RefineConfig) -> dict[tuple[int, int], tuple[float, float]]:
    stack = field.grid.stack
    sizes = {}
    for (j, i), (G, gx, gy) in all_element_gradients(field).items():
        e = stack.layers[j].elements[i]
        sizes[(j, i)] = refine_gridsize(e, gx, cfg, gy) if cfg.per_axis else refine_gridsize(e, G, cfg)
    return sizes


def refine_loop(stack: StackDescription, nx: int, ny: int, cfg: RefineConfig,
                powers: Mapping[str, float], workers: int = 1, coarse_field=None) -> ThermalGrid:
    """Coarse uniform solve, then a gradient-refined non-uniform grid.

    ``cfg.passes > 1`` repeats solve-and-refine on the refined grid.
    A precomputed coarse solution can be passed as ``coarse_field``.
    """
    from .network import assemble
    from .solver import solve_steady

    grid = build_uniform_grid(stack, nx, ny)
    field = coarse_field
    for _ in range(cfg.passes):
        if field is None:
            field = solve_steady(assemble(grid, stack.sink, powers, workers=workers))
        grid = build_nonuniform_grid(stack, gridsizes_from_field(field, cfg))
        field = None
    return grid

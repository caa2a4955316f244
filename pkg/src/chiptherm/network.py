"""RC network assembly: conductance matrix, capacitances and power vector."""

from __future__ import annotations

import io
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Mapping, Optional

import numpy as np
import scipy.sparse as sp

from .errors import InputError
from .grid import Cell, ThermalGrid
from .stack import Sink


def face_conductance(a: Cell, b: Cell, shared_area: float, axis: int) -> float:
    """Series coupling of the two half cells across a shared face (W/K)."""
    if axis == 2:
        ka, kb = a.material.k_vertical, b.material.k_vertical
    else:
        ka, kb = a.material.k_inplane, b.material.k_inplane
    return shared_area / (a.extent(axis) / (2 * ka) + b.extent(axis) / (2 * kb))


def cell_capacitance(c: Cell) -> float:
    return c.material.density * c.material.heat_capacity * c.volume


def sink_conductance(h: float, area, thickness, k_vertical):
    """Convective film in series with the half cell below the sink face."""
    return area / (1.0 / h + thickness / (2.0 * k_vertical))


def power_map(grid: ThermalGrid) -> tuple[list[str], sp.csr_matrix]:
    """Sparse ``n x m`` matrix spreading each power source over its cells.

    Cells carrying the same ``power_id`` share that source's power in
    proportion to their volume, which reduces to area within one layer.
    Column sums are exactly one.
    """
    ids: list[str] = []
    col_of: dict[str, int] = {}
    groups: dict[str, list] = {}
    for m in grid.meshes:
        e = grid.element_of(m)
        if e.power_id is None:
            continue
        if not grid.stack.layers[m.layer].is_source:
            raise InputError(f"power source {e.power_id!r} sits on non-source layer "
                             f"{grid.stack.layers[m.layer].name!r}")
        if e.power_id not in col_of:
            col_of[e.power_id] = len(ids)
            ids.append(e.power_id)
            groups[e.power_id] = []
        groups[e.power_id].append(m.cells)
    rows, cols, vals = [], [], []
    vol = grid.volume
    for pid in ids:
        cells = np.concatenate(groups[pid])
        w = vol[cells] / vol[cells].sum()
        w[-1] = 1.0 - w[:-1].sum()
        rows.append(cells)
        cols.append(np.full(len(cells), col_of[pid]))
        vals.append(w)
    if not ids:
        return ids, sp.csr_matrix((grid.n, 0))
    B = sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                      shape=(grid.n, len(ids)))
    return ids, B


def map_power(powers: Mapping[str, float], grid: ThermalGrid) -> np.ndarray:
    """Per-cell injected power (W), shared within each source by volume."""
    ids, B = power_map(grid)
    p = _power_values(powers, ids)
    return B @ p if len(ids) else np.zeros(grid.n)


def _power_values(powers: Mapping[str, float], ids: list[str]) -> np.ndarray:
    unknown = set(powers) - set(ids)
    if unknown:
        raise InputError(f"no source-layer element carries power id {sorted(unknown)[0]!r}")
    p = np.array([float(powers.get(i, 0.0)) for i in ids])
    if np.any(p < 0):
        raise InputError("source powers must be non-negative")
    return p


@dataclass(frozen=True, eq=False)
class SparseSystem:
    """``G T = P`` with ``P`` including the ambient term of the sink."""

    G: sp.csr_matrix
    C: np.ndarray
    P: np.ndarray
    ambient: float
    sink_g: np.ndarray
    grid: Optional[ThermalGrid] = None
    power_ids: tuple[str, ...] = ()
    B: Optional[sp.csr_matrix] = None
    assembly_seconds: float = 0.0
    _cache: dict = field(default_factory=dict, repr=False)

    @property
    def n(self) -> int:
        return self.G.shape[0]

    @property
    def injected(self) -> np.ndarray:
        return self.P - self.sink_g * self.ambient

    def power_vector(self, powers: Mapping[str, float] | np.ndarray) -> np.ndarray:
        """Right-hand side for the given source powers."""
        if self.B is None:
            raise InputError("system was built without a power map")
        if isinstance(powers, Mapping):
            p = np.array([float(powers.get(i, 0.0)) for i in self.power_ids])
        else:
            p = np.asarray(powers, dtype=float)
        inj = self.B @ p if len(self.power_ids) else np.zeros(self.n)
        return inj + self.sink_g * self.ambient

    def dump_coo(self) -> str:
        coo = self.G.tocoo()
        buf = io.StringIO()
        for r, c, v in zip(coo.row, coo.col, coo.data):
            buf.write(f"{r} {c} {float(v)!r}\n")
        return buf.getvalue()


def _conductances(grid: ThermalGrid) -> np.ndarray:
    kin, kv, _ = grid.material_arrays()
    a, b, ax = grid.adj_a, grid.adj_b, grid.adj_axis
    ext = np.stack([grid.x1 - grid.x0, grid.y1 - grid.y0, grid.dz])
    k_a = np.where(ax == 2, kv[a], kin[a])
    k_b = np.where(ax == 2, kv[b], kin[b])
    d_a = ext[ax, a]
    d_b = ext[ax, b]
    return grid.adj_area / (d_a / (2 * k_a) + d_b / (2 * k_b))


def _rows_block(r0, r1, a, b, g, diag_extra):
    """Entries of rows [r0, r1), sorted by (row, column)."""
    in_a = (a >= r0) & (a < r1)
    in_b = (b >= r0) & (b < r1)
    rows = np.concatenate([a[in_a], b[in_b]])
    cols = np.concatenate([b[in_a], a[in_b]])
    vals = np.concatenate([g[in_a], g[in_b]])
    order = np.lexsort((cols, rows))
    rows, cols, vals = rows[order], cols[order], vals[order]
    diag = diag_extra[r0:r1].copy()
    if len(rows):
        starts = np.flatnonzero(np.r_[True, rows[1:] != rows[:-1]])
        sums = np.add.reduceat(vals, starts)
        diag[rows[starts] - r0] += sums
    # merge diagonal in column order
    all_rows = np.concatenate([rows, np.arange(r0, r1)])
    all_cols = np.concatenate([cols, np.arange(r0, r1)])
    all_vals = np.concatenate([-vals, diag])
    order = np.lexsort((all_cols, all_rows))
    return all_rows[order], all_cols[order], all_vals[order]


def assemble(grid: ThermalGrid, sink: Optional[Sink] = None, powers: Mapping[str, float] | None = None,
             workers: int = 1) -> SparseSystem:
    """Build the RC system; rows are partitioned into contiguous ranges per worker.

    Every worker writes only its own rows (including the mirrored half of
    each symmetric coupling), and each row's diagonal is summed in column
    order, so the matrix is bit-identical for any ``workers``.
    """
    t0 = time.perf_counter()
    sink = sink or grid.stack.sink
    n = grid.n
    g = _conductances(grid)
    _, kv, rc = grid.material_arrays()
    sink_g = np.zeros(n)
    cells = grid.sink_cells
    sink_g[cells] = sink_conductance(sink.h_coeff, grid.sink_area, grid.dz[cells], kv[cells])

    workers = max(1, int(workers))
    bounds = np.linspace(0, n, min(workers, max(n, 1)) + 1).astype(np.int64)
    ranges = list(zip(bounds[:-1], bounds[1:]))
    a, b = grid.adj_a, grid.adj_b
    if len(ranges) == 1:
        blocks = [_rows_block(0, n, a, b, g, sink_g)]
    else:
        with ThreadPoolExecutor(max_workers=len(ranges)) as pool:
            blocks = list(pool.map(lambda r: _rows_block(r[0], r[1], a, b, g, sink_g), ranges))
    rows = np.concatenate([x[0] for x in blocks])
    cols = np.concatenate([x[1] for x in blocks])
    vals = np.concatenate([x[2] for x in blocks])
    indptr = np.concatenate([[0], np.cumsum(np.bincount(rows, minlength=n))])
    G = sp.csr_matrix((vals, cols, indptr), shape=(n, n))

    ids, B = power_map(grid)
    p = _power_values(powers or {}, ids)
    inj = B @ p if ids else np.zeros(n)
    P = inj + sink_g * sink.ambient
    C = rc * grid.volume
    elapsed = time.perf_counter() - t0
    return SparseSystem(G, C, P, sink.ambient, sink_g, grid, tuple(ids), B, elapsed)


def check_invariants(sys: SparseSystem, rtol: float = 1e-12) -> None:
    """Raise AssertionError if a structural invariant of the system fails."""
    G = sys.G.tocsr()
    asym = abs(G - G.T)
    scale = abs(G).max() if G.nnz else 1.0
    assert asym.max() <= rtol * scale if asym.nnz else True, "G is not symmetric"
    off = G - sp.diags(G.diagonal())
    assert off.nnz == 0 or off.data.max() <= 0, "positive off-diagonal entry"
    rs = np.asarray(G.sum(axis=1)).ravel()
    assert np.allclose(rs, sys.sink_g, rtol=1e-9, atol=1e-9 * scale), "row sums differ from boundary conductance"
    assert np.all(sys.C > 0), "non-positive capacitance"
    assert np.all(sys.injected >= -1e-15 * max(1.0, abs(sys.P).max())), "negative power"

"""Reference computations used to verify the sparse pipeline.

Nothing here shares code with the sparse solvers: the dense solve is a
hand-written Gaussian elimination and the slab profile is closed form.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InputError, SingularSystemError
from .grid import ElementMesh, mesh_overlaps
from .network import SparseSystem
from .solver import TemperatureField

DENSE_LIMIT = 2000


def gauss_solve(A: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Gaussian elimination with partial pivoting."""
    A = np.array(A, dtype=float)
    x = np.array(b, dtype=float)
    n = len(x)
    scale = np.abs(A).max() if n else 1.0
    for k in range(n):
        p = k + int(np.argmax(np.abs(A[k:, k])))
        if abs(A[p, k]) <= 1e-14 * scale:
            raise SingularSystemError("matrix is singular to working precision")
        if p != k:
            A[[k, p]] = A[[p, k]]
            x[[k, p]] = x[[p, k]]
        f = A[k + 1:, k] / A[k, k]
        A[k + 1:, k:] -= np.outer(f, A[k, k:])
        x[k + 1:] -= f * x[k]
    for k in range(n - 1, -1, -1):
        x[k] = (x[k] - A[k, k + 1:] @ x[k + 1:]) / A[k, k]
    return x


def dense_solve(sys: SparseSystem) -> TemperatureField:
    if sys.n > DENSE_LIMIT:
        raise InputError(f"dense_solve refuses {sys.n} unknowns (limit {DENSE_LIMIT})")
    A = sys.G.toarray()
    x = gauss_solve(A, sys.P)
    return TemperatureField(x, sys.grid)


@dataclass(frozen=True)
class SlabSpec:
    """1D slab: power ``flux`` enters one face, the other face sees the sink."""

    thickness: float
    conductivity: float
    area: float
    flux: float
    h_coeff: float
    ambient: float

    def __post_init__(self):
        for name in ("thickness", "conductivity", "area", "h_coeff", "ambient"):
            if not getattr(self, name) > 0:
                raise InputError(f"SlabSpec.{name} must be positive")
        if self.flux < 0:
            raise InputError("SlabSpec.flux must be non-negative")


def analytic_slab(s: SlabSpec, x) -> np.ndarray:
    """Temperature at depth ``x`` measured from the heated face.

    ``x`` is an array of depths or an integer point count (evenly spaced
    from the heated face, x = 0, to the sink face, x = L).
    """
    if isinstance(x, (int, np.integer)):
        x = np.linspace(0.0, s.thickness, int(x))
    x = np.asarray(x, dtype=float)
    film = s.flux / (s.h_coeff * s.area)
    return s.ambient + film + s.flux / (s.conductivity * s.area) * (s.thickness - x)


# --- field comparison --------------------------------------------------------

@dataclass(frozen=True)
class LayerMap:
    """Lateral cell blocks of one layer and a value array indexed like the grid."""

    name: str
    meshes: tuple[ElementMesh, ...]
    values: np.ndarray


def layer_maps(field: TemperatureField) -> list[LayerMap]:
    g = field.grid
    return [LayerMap(g.stack.layers[j].name, g.meshes[slice(*g.layer_meshes[j])], field.values)
            for j in range(g.n_layers)]


def functional_maps(field: TemperatureField) -> list[LayerMap]:
    """Thickness-weighted average over the sublayers of each functional layer.

    All sublayers of a functional layer must share one lateral mesh.
    """
    g = field.grid
    out = []
    for name in g.stack.functional_layers():
        js = [j for j, l in enumerate(g.stack.layers) if l.functional == name]
        base = g.meshes[slice(*g.layer_meshes[js[0]])]
        acc = np.zeros(len(g.layer_cells(js[0])))
        hsum = 0.0
        for j in js:
            ms = g.meshes[slice(*g.layer_meshes[j])]
            if len(ms) != len(base) or not all(a.same_cells(b) for a, b in zip(ms, base)):
                raise InputError(f"sublayers of {name!r} do not share a lateral mesh")
            h = g.stack.layers[j].thickness
            acc += h * field.values[g.layer_cells(j)]
            hsum += h
        vals = np.zeros(g.n)
        vals[g.layer_cells(js[0])] = acc / hsum
        out.append(LayerMap(name, base, vals))
    return out


def _rect(m: ElementMesh):
    return m.xb[0], m.yb[0], m.xb[-1], m.yb[-1]


def _map_pair_sums(a: LayerMap, b: LayerMap):
    """Integrals of (a-b)^2 and of 1 over the common refinement (nm^2)."""
    ra = np.array([_rect(m) for m in a.meshes])
    rb = np.array([_rect(m) for m in b.meshes])
    w = np.minimum(ra[:, None, 2], rb[None, :, 2]) - np.maximum(ra[:, None, 0], rb[None, :, 0])
    h = np.minimum(ra[:, None, 3], rb[None, :, 3]) - np.maximum(ra[:, None, 1], rb[None, :, 1])
    sq = 0.0
    area = 0.0
    for i, k in zip(*np.nonzero((w > 0) & (h > 0))):
        ca, cb, s = mesh_overlaps(a.meshes[i], b.meshes[k])
        d = a.values[ca] - b.values[cb]
        sq += float(np.sum(s * d * d))
        area += float(np.sum(s))
    return sq, area


def rmse(a, b) -> float:
    """Area-weighted RMS difference between two fields (K).

    Accepts two TemperatureFields or two lists of LayerMap. Fields on
    different grids are compared layer by layer on the common refinement
    of their cells, which is exact for piecewise-constant fields.
    """
    if isinstance(a, TemperatureField) and isinstance(b, TemperatureField):
        if a.grid is b.grid or a.grid is None or b.grid is None:
            if len(a.values) != len(b.values):
                raise InputError("fields of different length without a common grid")
            w = a.grid.area if a.grid is not None else (b.grid.area if b.grid is not None
                                                        else np.ones(len(a.values)))
            d = a.values - b.values
            return float(np.sqrt(np.sum(w * d * d) / np.sum(w)))
        a, b = layer_maps(a), layer_maps(b)
    a, b = list(a), list(b)
    if len(a) != len(b):
        raise InputError(f"cannot compare {len(a)} layers with {len(b)} layers")
    sq = 0.0
    area = 0.0
    for la, lb in zip(a, b):
        s, ar = _map_pair_sums(la, lb)
        if ar == 0.0:
            raise InputError(f"layers {la.name!r} and {lb.name!r} do not overlap")
        sq += s
        area += ar
    return float(np.sqrt(sq / area))


def max_abs_diff(a: TemperatureField, b: TemperatureField) -> float:
    return float(np.max(np.abs(np.asarray(a.values) - np.asarray(b.values))))

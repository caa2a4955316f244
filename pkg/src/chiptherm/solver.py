"""Steady-state and transient solution of the RC system."""

from __future__ import annotations

import csv
import io
import math
import time
from dataclasses import dataclass
from typing import Callable, Mapping, Optional, Union

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as sla

from .errors import InputError, NumericalError, SingularSystemError
from .network import SparseSystem

RESIDUAL_TOL = 1e-10


@dataclass(frozen=True, eq=False)
class TemperatureField:
    values: np.ndarray
    grid: object = None
    solve_seconds: float = 0.0

    def layer_values(self, layer: int) -> np.ndarray:
        return self.values[self.grid.layer_cells(layer)]

    def hotspot(self, layer: Optional[int] = None):
        """(max T, cell index) over one layer or the whole grid."""
        cells = np.arange(len(self.values)) if layer is None else self.grid.layer_cells(layer)
        k = cells[int(np.argmax(self.values[cells]))]
        return float(self.values[k]), int(k)

    def probe(self, x: float, y: float, layer: int) -> float:
        return float(self.values[self.grid.locate(x, y, layer)])

    def surface_temperatures(self) -> tuple[np.ndarray, np.ndarray]:
        """Outer-face temperatures of the bottom and top layers' cells.

        On the sink face the film drop is removed from the cell value
        (T_face = T_amb + q / h); adiabatic faces carry the cell value.
        """
        g = self.grid
        sink = g.stack.sink
        _, kv, _ = g.material_arrays()
        faces = []
        for j, face in ((0, "bottom"), (g.n_layers - 1, "top")):
            cells = g.layer_cells(j)
            T = self.values[cells]
            if sink.face == face:
                half = g.dz[cells] / (2.0 * kv[cells])
                film = 1.0 / sink.h_coeff
                T = sink.ambient + (T - sink.ambient) * film / (film + half)
            faces.append(T)
        return faces[0], faces[1]


def _no_ground(sys: SparseSystem) -> bool:
    return not np.any(sys.sink_g > 0)


def _factor(A: sp.spmatrix):
    # minimum-degree ordering on A^T + A with diagonal pivoting: a symmetric factorization
    return sla.splu(A.tocsc(), permc_spec="MMD_AT_PLUS_A", diag_pivot_thresh=0.0,
                    options={"SymmetricMode": True})


def _rel_residual(A, x, b) -> float:
    r = A @ x - b
    scale = max(np.abs(b).max(), np.abs(A @ x).max(), 1e-300)
    return float(np.abs(r).max() / scale)


def _direct(A, b, cache: dict, key):
    lu = cache.get(key)
    if lu is None:
        try:
            lu = cache[key] = _factor(A)
        except RuntimeError as exc:
            raise SingularSystemError(f"factorization failed: {exc}") from None
    x = lu.solve(b)
    for _ in range(3):
        if _rel_residual(A, x, b) <= RESIDUAL_TOL:
            break
        x = x + lu.solve(b - A @ x)
    return x


def _pcg(A, b, x0=None):
    d = A.diagonal()
    if np.any(d <= 0):
        raise SingularSystemError("non-positive diagonal in conductance matrix")
    M = sp.diags(1.0 / d)
    x, info = sla.cg(A, b, x0=x0, rtol=1e-13, atol=0.0, M=M, maxiter=20 * A.shape[0] + 100)
    if info != 0:
        raise NumericalError(f"conjugate gradient did not converge (info={info})")
    return x


def _check(A, x, b):
    if not np.all(np.isfinite(x)):
        raise SingularSystemError("solution is not finite")
    res = _rel_residual(A, x, b)
    if res > RESIDUAL_TOL:
        raise NumericalError(f"relative residual {res:.3e} exceeds {RESIDUAL_TOL:.0e}")


def solve_steady(sys: SparseSystem, method: str = "direct", P: Optional[np.ndarray] = None) -> TemperatureField:
    """Solve ``G T = P``.

    ``method="direct"`` factors once per system and reuses the factor for
    later calls; ``"cg"`` is a Jacobi-preconditioned conjugate gradient for
    memory-constrained runs.
    """
    if _no_ground(sys):
        raise SingularSystemError("system has no thermal ground")
    b = sys.P if P is None else np.asarray(P, dtype=float)
    t0 = time.perf_counter()
    if method == "direct":
        x = _direct(sys.G, b, sys._cache, "steady")
    elif method == "cg":
        x = _pcg(sys.G.tocsr(), b)
    else:
        raise InputError(f"unknown solve method {method!r}")
    _check(sys.G, x, b)
    return TemperatureField(x, sys.grid, time.perf_counter() - t0)


def step_transient(sys: SparseSystem, T_n: np.ndarray, P_next: np.ndarray, dt: float,
                   scheme: str = "backward-euler", P_n: Optional[np.ndarray] = None) -> np.ndarray:
    """Advance one step: ``(C/dt + G) T1 = (C/dt) T0 + P1`` for backward Euler.

    Crank-Nicolson uses ``(C/dt + G/2) T1 = (C/dt - G/2) T0 + (P0 + P1)/2``.
    The left-hand matrix is factored once per (scheme, dt) and cached.
    """
    if not dt > 0:
        raise InputError(f"time step must be positive, got {dt}")
    if _no_ground(sys):
        raise SingularSystemError("system has no thermal ground")
    Cdt = sys.C / dt
    if scheme == "backward-euler":
        A_key = ("be", dt)
        rhs = Cdt * T_n + P_next
        theta = 1.0
    elif scheme == "crank-nicolson":
        A_key = ("cn", dt)
        P0 = P_next if P_n is None else P_n
        rhs = Cdt * T_n - 0.5 * (sys.G @ T_n) + 0.5 * (P0 + P_next)
        theta = 0.5
    else:
        raise InputError(f"unknown scheme {scheme!r}")
    mats = sys._cache.setdefault("matrices", {})
    A = mats.get(A_key)
    if A is None:
        A = mats[A_key] = (sp.diags(Cdt) + theta * sys.G).tocsc()
    x = _direct(A, rhs, sys._cache, A_key)
    _check(A, x, rhs)
    return x


# --- power inputs ------------------------------------------------------------

@dataclass(frozen=True)
class PowerSignal:
    """Gaussian-modulated sinusoid around a constant level ``P0``."""

    P0: float
    t0: float = 0.5
    tau2: float = 0.1
    omega: float = 10 * math.pi
    clamp: bool = False

    def __post_init__(self):
        if self.P0 < 0 or not self.tau2 > 0:
            raise InputError("PowerSignal needs P0 >= 0 and tau2 > 0")

    def __call__(self, t: float) -> float:
        return power_signal(t, self)


def power_signal(t: float, s: PowerSignal) -> float:
    p = s.P0 + s.P0 * math.exp(-((t - s.t0) ** 2) / s.tau2) * math.sin(s.omega * t)
    return max(p, 0.0) if s.clamp else p


@dataclass(frozen=True)
class PowerTrace:
    """Tabulated power, linearly interpolated and held beyond the ends."""

    times: tuple[float, ...]
    watts: tuple[float, ...]

    def __post_init__(self):
        if len(self.times) != len(self.watts) or not self.times:
            raise InputError("power trace needs matching, non-empty time and power columns")
        if any(b <= a for a, b in zip(self.times, self.times[1:])):
            raise InputError("power trace times must increase strictly")

    def __call__(self, t: float) -> float:
        return float(np.interp(t, self.times, self.watts))


def read_power_traces(text: str) -> dict[str, PowerTrace]:
    """Parse CSV with a ``t`` column followed by one column per power id."""
    rows = [r for r in csv.reader(io.StringIO(text)) if r and not r[0].lstrip().startswith("#")]
    if not rows:
        raise InputError("empty power trace")
    header = [h.strip() for h in rows[0]]
    if header[0] not in ("t", "time"):
        raise InputError("power trace: first column must be 't'")
    data = []
    for k, r in enumerate(rows[1:], start=2):
        if len(r) != len(header):
            raise InputError(f"power trace line {k}: expected {len(header)} columns")
        try:
            data.append([float(v) for v in r])
        except ValueError:
            raise InputError(f"power trace line {k}: non-numeric value") from None
    cols = list(zip(*data)) if data else [()] * len(header)
    return {name: PowerTrace(tuple(cols[0]), tuple(cols[i])) for i, name in enumerate(header) if i}


Drive = Union[PowerSignal, PowerTrace, Callable[[float], float], float]


def _evaluate(drive: Drive, t: float) -> float:
    return float(drive) if isinstance(drive, (int, float)) else float(drive(t))


@dataclass(frozen=True)
class TransientConfig:
    dt: float
    t_end: float
    scheme: str = "backward-euler"

    def __post_init__(self):
        if not self.dt > 0:
            raise InputError("dt must be positive")
        if self.t_end < self.dt * (1 - 1e-12):
            raise InputError("t_end must be at least dt")
        if self.scheme not in ("backward-euler", "crank-nicolson"):
            raise InputError(f"unknown scheme {self.scheme!r}")

    @property
    def n_steps(self) -> int:
        return max(1, int(math.ceil(self.t_end / self.dt - 1e-9)))


@dataclass
class TransientResult:
    times: np.ndarray
    probes: dict[str, np.ndarray]
    final: np.ndarray
    fields: Optional[list[np.ndarray]] = None
    solve_seconds: float = 0.0

    def probe_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["t", "probe", "T"])
        for k, t in enumerate(self.times):
            for name, trace in self.probes.items():
                w.writerow([f"{t:.9g}", name, f"{trace[k]:.9f}"])
        return buf.getvalue()


def run_transient(sys: SparseSystem, drives: Mapping[str, Drive], cfg: TransientConfig,
                  probes: Optional[Mapping[str, int]] = None, T0: Optional[np.ndarray] = None,
                  keep_fields: bool = False) -> TransientResult:
    """March from ``T0`` (default: the stack's initial temperature).

    ``drives`` maps power ids to a PowerSignal, PowerTrace, callable of t,
    or constant; ids not listed are off. ``probes`` maps names to cell
    indices and is sampled at t = 0 and after every step.
    """
    unknown = set(drives) - set(sys.power_ids)
    if unknown:
        raise InputError(f"no source-layer element carries power id {sorted(unknown)[0]!r}")
    if T0 is None:
        t_init = sys.grid.stack.t_init if sys.grid is not None else sys.ambient
        T = np.full(sys.n, float(t_init))
    else:
        T = np.array(T0, dtype=float)
    probes = dict(probes or {})
    n = cfg.n_steps

    def rhs(t):
        return sys.power_vector(np.array([_evaluate(drives[i], t) if i in drives else 0.0
                                          for i in sys.power_ids]))

    times = np.empty(n + 1)
    traces = {k: np.empty(n + 1) for k in probes}
    fields = [T.copy()] if keep_fields else None
    times[0] = 0.0
    for k, c in probes.items():
        traces[k][0] = T[c]
    t0 = time.perf_counter()
    P_prev = rhs(0.0)
    for step in range(1, n + 1):
        t = step * cfg.dt
        P_next = rhs(t)
        T = step_transient(sys, T, P_next, cfg.dt, cfg.scheme, P_prev)
        P_prev = P_next
        times[step] = t
        for k, c in probes.items():
            traces[k][step] = T[c]
        if keep_fields:
            fields.append(T.copy())
    return TransientResult(times, traces, T, fields, time.perf_counter() - t0)

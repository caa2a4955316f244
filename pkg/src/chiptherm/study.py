"""Uniform versus gradient-refined grids at matched cell budgets."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping, Optional, Sequence

from .errors import InputError
from .geometry import Rect
from .grid import RefineConfig, all_element_gradients, build_nonuniform_grid, build_uniform_grid, \
    gridsizes_from_field
from .network import assemble
from .oracle import rmse
from .solver import TemperatureField, solve_steady
from .stack import StackDescription


def uniform_dims(footprint: Rect, budget: int) -> tuple[int, int]:
    """Near-square cells with nx * ny close to ``budget``."""
    if budget < 1:
        raise InputError(f"cell budget must be positive, got {budget}")
    aspect = footprint.width / footprint.height
    nx = max(1, round(math.sqrt(budget * aspect)))
    ny = max(1, round(budget / nx))
    return nx, ny


def uniform_for_budget(stack: StackDescription, budget: int):
    """Finest uniform grid (element borders included) with at most ``budget`` cells."""
    fp = stack.footprint
    b = budget
    while True:
        grid = build_uniform_grid(stack, *uniform_dims(fp, b))
        if grid.n <= budget or b == 1:
            return grid
        b = max(1, min(b - 1, int(b * budget / grid.n)))


def solve_on(stack, grid, powers, workers=1) -> TemperatureField:
    return solve_steady(assemble(grid, stack.sink, powers, workers=workers))


def gradient_span(coarse: TemperatureField) -> tuple[float, float]:
    gs = [v[0] for v in all_element_gradients(coarse).values()]
    return float(min(gs)), float(max(gs))


def adaptive_for_budget(stack: StackDescription, coarse: TemperatureField, budget: int, l_min: float,
                        alpha: float = 1.0, iters: int = 40):
    """Smallest G_base (most refined grid) whose refined grid fits in ``budget`` cells.

    The cell count falls monotonically as G_base grows, so a bisection in
    log G_base finds the boundary. Returns (grid, g_base); the grid is None
    when even the unrefined grid (one cell per element) is over budget.
    """
    def grid_for(gb):
        cfg = RefineConfig(g_base=gb, l_min=l_min, alpha=alpha)
        return build_nonuniform_grid(stack, gridsizes_from_field(coarse, cfg))

    g_min, g_max = gradient_span(coarse)
    hi = max(g_max, 1.0) * 1e3
    lo = max(g_min, 1e-6) * 1e-3
    best = grid_for(hi)
    if best.n > budget:
        return None, hi
    best_gb = hi
    a, b = math.log(lo), math.log(hi)
    for _ in range(iters):
        mid = 0.5 * (a + b)
        g = grid_for(math.exp(mid))
        if g.n <= budget:
            best, best_gb, b = g, math.exp(mid), mid
        else:
            a = mid
    return best, best_gb


@dataclass(frozen=True)
class StudyRow:
    budget: int
    kind: str
    cells: int
    rmse: float
    g_base: Optional[float] = None


def grid_study(stack: StackDescription, powers: Mapping[str, float], budgets: Sequence[int],
               coarse: tuple[int, int] = (40, 24), l_min: float = 10e-6,
               reference_cells: Optional[int] = None, workers: int = 1) -> tuple[list[StudyRow], int]:
    """RMSE of uniform and refined grids per budget against a fine uniform grid.

    The reference defaults to a uniform grid with at least 16 times the
    largest budget; an explicit ``reference_cells`` is treated like a budget.
    Returns the rows and the reference cell count.
    """
    if not budgets:
        raise InputError("grid study needs at least one budget")
    fp = stack.footprint
    if reference_cells is None:
        ref_grid = build_uniform_grid(stack, *uniform_dims(fp, 16 * max(budgets)))
    else:
        ref_grid = uniform_for_budget(stack, reference_cells)
    ref = solve_on(stack, ref_grid, powers, workers)
    coarse_field = solve_on(stack, build_uniform_grid(stack, *coarse), powers, workers)
    rows = []
    for b in budgets:
        ug = uniform_for_budget(stack, b)
        rows.append(StudyRow(b, "uniform", ug.n, rmse(solve_on(stack, ug, powers, workers), ref)))
        ag, gb = adaptive_for_budget(stack, coarse_field, b, l_min)
        if ag is None:
            rows.append(StudyRow(b, "adaptive", 0, float("nan"), gb))
        else:
            rows.append(StudyRow(b, "adaptive", ag.n, rmse(solve_on(stack, ag, powers, workers), ref), gb))
    return rows, ref_grid.n


def study_csv(rows: Sequence[StudyRow]) -> str:
    out = ["budget,kind,cells,rmse_K,g_base"]
    for r in rows:
        gb = "" if r.g_base is None else f"{r.g_base:.6g}"
        out.append(f"{r.budget},{r.kind},{r.cells},{r.rmse:.9f},{gb}")
    return "\n".join(out) + "\n"


def cells_to_match(curve: Sequence[tuple[int, float]], target: float) -> Optional[int]:
    """Fewest cells among (cells, rmse) points whose RMSE is at most ``target``."""
    ok = [n for n, e in curve if e <= target]
    return min(ok) if ok else None

"""Command-line front end.

    chiptherm simulate --stack F [--mode steady|transient] [--grid uniform:NX,NY|adaptive] ...
    chiptherm tile --layout F --layer L [--imax N --rho-lo X --rho-hi Y]
    chiptherm grid-study --budgets a,b,c [--stack F]

Exit status: 0 success, 1 numerical failure, 2 input error.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import re
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .demos import HOTSPOT_DIE, demo_path
from .errors import InputError, NumericalError
from .geometry import Rect, bounding_window, build_spatial_index, merge_shapes
from .grid import RefineConfig, all_element_gradients, build_uniform_grid, refine_loop
from .images import emit_heatmap, rho_raster, write_pgm
from .layout import load_layout
from .network import assemble
from .solver import (TemperatureField, TransientConfig, read_power_traces, run_transient,
                     solve_steady)
from .stack import adaptive_divide
from .stackfile import load_stack, parse_signals, um_to_nm
from .study import grid_study, study_csv
from .tiler import TilingConfig, generate_tiles, tiles_csv

log = logging.getLogger("chiptherm")


@dataclass
class RunConfig:
    stack: Path
    out: Path
    mode: str = "steady"
    grid: tuple = ("uniform", 32, 32)
    coarse: tuple[int, int] = (40, 24)
    g_base: Optional[float] = None          # None: a quarter of the mean coarse gradient
    alpha: float = 1.0
    l_min: float = 10e-6
    layer_division: bool = False
    var_threshold: float = 0.05
    max_iter: int = 8
    workers: int = 1
    method: str = "direct"
    dt: float = 1e-3
    t_end: float = 1.0
    scheme: str = "backward-euler"
    signals: Optional[Path] = None
    power_trace: Optional[Path] = None
    probes: list[tuple[str, float, float, Optional[str]]] = field(default_factory=list)
    image_size: int = 256

    def __post_init__(self):
        if self.mode not in ("steady", "transient"):
            raise InputError(f"unknown mode {self.mode!r}")
        for p in (self.stack, self.signals, self.power_trace):
            if p is not None and not Path(p).is_file():
                raise InputError(f"no such file: {p}")
        if self.signals is not None and self.power_trace is not None:
            raise InputError("give either --signals or --power-trace, not both")


def default_workers() -> int:
    v = os.environ.get("THERM_WORKERS", "1")
    try:
        return max(1, int(v))
    except ValueError:
        raise InputError(f"THERM_WORKERS must be an integer, got {v!r}") from None


def parse_grid(text: str) -> tuple:
    if text == "adaptive":
        return ("adaptive",)
    m = re.fullmatch(r"uniform:(\d+),(\d+)", text)
    if not m or int(m.group(1)) < 1 or int(m.group(2)) < 1:
        raise InputError(f"--grid expects 'uniform:NX,NY' or 'adaptive', got {text!r}")
    return ("uniform", int(m.group(1)), int(m.group(2)))


def _pair(text: str, what: str) -> tuple[int, int]:
    m = re.fullmatch(r"(\d+),(\d+)", text)
    if not m:
        raise InputError(f"{what} expects 'NX,NY', got {text!r}")
    return int(m.group(1)), int(m.group(2))


def parse_probe(text: str) -> tuple[str, float, float, Optional[str]]:
    """``NAME=X,Y`` or ``NAME=X,Y@LAYER`` with X, Y in micrometres."""
    m = re.fullmatch(r"([^=]+)=([-+0-9.eE]+),([-+0-9.eE]+)(?:@(.+))?", text)
    if not m:
        raise InputError(f"--probe expects NAME=X,Y[@LAYER], got {text!r}")
    return m.group(1), float(m.group(2)) * 1e-6, float(m.group(3)) * 1e-6, m.group(4)


def _layer_index(stack, name: Optional[str]) -> int:
    if name is None:
        for j in range(len(stack.layers) - 1, -1, -1):
            if stack.layers[j].is_source:
                return j
        return len(stack.layers) - 1
    for j in range(len(stack.layers) - 1, -1, -1):
        if stack.layers[j].name == name or stack.layers[j].functional == name:
            return j
    raise InputError(f"probe layer {name!r} not in stack")


def _safe(name: str) -> str:
    return re.sub(r"[^A-Za-z0-9_.-]", "_", name)


def write_layer_csv(field: TemperatureField, layer: int, path: Path) -> None:
    g = field.grid
    cells = g.layer_cells(layer)
    lines = ["cell,x0_um,y0_um,x1_um,y1_um,T_K"]
    for c in cells:
        lines.append(f"{c},{g.x0[c] * 1e6:.6f},{g.y0[c] * 1e6:.6f},{g.x1[c] * 1e6:.6f},"
                     f"{g.y1[c] * 1e6:.6f},{field.values[c]:.9f}")
    path.write_text("\n".join(lines) + "\n")


def hotspot_summary(field: TemperatureField) -> dict:
    g = field.grid
    t, c = field.hotspot()
    per_layer = {}
    for j, layer in enumerate(g.stack.layers):
        tj, cj = field.hotspot(j)
        per_layer[layer.name] = {"T_max_K": round(tj, 9), "x_um": round(g.xc[cj] * 1e6, 6),
                                 "y_um": round(g.yc[cj] * 1e6, 6)}
    return {"T_max_K": round(t, 9), "layer": g.stack.layers[g.layer[c]].name,
            "x_um": round(g.xc[c] * 1e6, 6), "y_um": round(g.yc[c] * 1e6, 6), "per_layer": per_layer}


def _drives(cfg: RunConfig, powers: dict[str, float]):
    drives: dict = dict(powers)
    if cfg.signals is not None:
        drives.update(parse_signals(Path(cfg.signals).read_text(), str(cfg.signals)))
    if cfg.power_trace is not None:
        drives.update(read_power_traces(Path(cfg.power_trace).read_text()))
    return drives


def cmd_simulate(cfg: RunConfig) -> dict:
    """Run the pipeline and write artifacts into ``cfg.out``; returns the summary."""
    sf = load_stack(cfg.stack)
    stack = sf.stack
    summary: dict = {"stack": str(cfg.stack), "mode": cfg.mode, "workers": cfg.workers}
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)

    if cfg.layer_division:
        stack, report = adaptive_divide(stack, cfg.var_threshold, cfg.max_iter)
        summary["layer_division"] = {"splits": report.splits, "stop_reason": report.stop_reason,
                                     "normalized_variance": report.normalized_variance,
                                     "layers": dict(report.layers[-1])}
        rows = ["iteration,variance,normalized_variance,layers"]
        for k, (v, nv, ls) in enumerate(zip(report.variance, report.normalized_variance, report.layers)):
            rows.append(f"{k},{v:.12e},{nv:.9f}," + " ".join(f"{n}:{c}" for n, c in ls))
        (out / "division.csv").write_text("\n".join(rows) + "\n")

    if cfg.grid[0] == "uniform":
        grid = build_uniform_grid(stack, cfg.grid[1], cfg.grid[2])
        summary["grid"] = {"kind": "uniform", "nx": cfg.grid[1], "ny": cfg.grid[2]}
    else:
        coarse = build_uniform_grid(stack, *cfg.coarse)
        coarse_field = solve_steady(assemble(coarse, stack.sink, sf.powers, workers=cfg.workers))
        g_base = cfg.g_base
        if g_base is None:
            g_base = max(float(np.mean([v[0] for v in all_element_gradients(coarse_field).values()])) / 4,
                         1e-9)
        rc = RefineConfig(g_base=g_base, l_min=cfg.l_min, alpha=cfg.alpha)
        grid = refine_loop(stack, *cfg.coarse, rc, sf.powers, cfg.workers, coarse_field=coarse_field)
        summary["grid"] = {"kind": "adaptive", "coarse": list(cfg.coarse), "g_base": g_base,
                           "l_min_um": cfg.l_min * 1e6, "alpha": cfg.alpha}
    summary["grid"]["cells"] = grid.n

    if cfg.mode == "steady":
        sys_ = assemble(grid, stack.sink, sf.powers, workers=cfg.workers)
        field = solve_steady(sys_, cfg.method)
        solve_s = field.solve_seconds
    else:
        sys_ = assemble(grid, stack.sink, workers=cfg.workers)
        probes = {name: grid.locate(x, y, _layer_index(stack, layer)) for name, x, y, layer in cfg.probes}
        tc = TransientConfig(cfg.dt, cfg.t_end, cfg.scheme)
        res = run_transient(sys_, _drives(cfg, sf.powers), tc, probes)
        (out / "probes.csv").write_text(res.probe_csv())
        field = TemperatureField(res.final, grid, res.solve_seconds)
        solve_s = res.solve_seconds
        summary["transient"] = {"dt": cfg.dt, "t_end": cfg.t_end, "scheme": cfg.scheme,
                                "steps": tc.n_steps, "probes": sorted(probes)}

    for j, layer in enumerate(stack.layers):
        name = _safe(layer.name)
        write_layer_csv(field, j, out / f"temperature_{name}.csv")
        emit_heatmap(field, j, out / f"heatmap_{name}.ppm", cfg.image_size)
    summary["hotspot"] = hotspot_summary(field)
    summary["timing"] = {"assembly_s": sys_.assembly_seconds, "solve_s": solve_s}
    (out / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    return summary


def cmd_tile(layout: Path, layer: int, cfg: TilingConfig, out: Path,
             window: Optional[Rect] = None, workers: int = 1, image_size: int = 256) -> list:
    data = load_layout(layout, layer)
    merged = merge_shapes(data.shapes)
    if window is None:
        window = bounding_window(merged)
    tiles = generate_tiles(build_spatial_index(merged), window, cfg, workers)
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "tiles.csv").write_text(tiles_csv(tiles))
    write_pgm(out / "rho_map.pgm", rho_raster(tiles, window, image_size))
    return tiles


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="chiptherm", description="Compact thermal model for chip stacks.")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="steady or transient simulation of a stack file")
    s.add_argument("--stack", required=True, type=Path)
    s.add_argument("--mode", choices=("steady", "transient"), default="steady")
    s.add_argument("--grid", default="uniform:32,32", help="uniform:NX,NY or adaptive")
    s.add_argument("--coarse", default="40,24", help="coarse grid for adaptive refinement")
    s.add_argument("--g-base", type=float, default=None, help="K/m; default: mean coarse gradient / 4")
    s.add_argument("--alpha", type=float, default=1.0)
    s.add_argument("--l-min", type=float, default=10.0, help="smallest cell edge, um")
    s.add_argument("--layer-division", choices=("on", "off"), default="off")
    s.add_argument("--var-threshold", type=float, default=0.05)
    s.add_argument("--max-iter", type=int, default=8)
    s.add_argument("--workers", type=int, default=None)
    s.add_argument("--method", choices=("direct", "cg"), default="direct")
    s.add_argument("--dt", type=float, default=1e-3)
    s.add_argument("--t-end", type=float, default=1.0)
    s.add_argument("--scheme", choices=("backward-euler", "crank-nicolson"), default="backward-euler")
    s.add_argument("--signals", type=Path, help="lines 'ID P0 T0 TAU2 OMEGA' or 'ID constant W'")
    s.add_argument("--power-trace", type=Path, help="CSV: t, then one column per power id")
    s.add_argument("--probe", action="append", default=[], help="NAME=X,Y[@LAYER], um")
    s.add_argument("--image-size", type=int, default=256)
    s.add_argument("--out", required=True, type=Path)

    t = sub.add_parser("tile", help="quadtree tiles of one layout layer")
    t.add_argument("--layout", required=True, type=Path)
    t.add_argument("--layer", required=True, type=int)
    t.add_argument("--imax", type=int, default=6)
    t.add_argument("--rho-lo", type=float, default=0.02)
    t.add_argument("--rho-hi", type=float, default=0.98)
    t.add_argument("--window", help="X0,Y0,X1,Y1 in um; default: layout bounding box")
    t.add_argument("--workers", type=int, default=None)
    t.add_argument("--out", type=Path, default=Path("."))

    g = sub.add_parser("grid-study", help="RMSE versus cell count, uniform and adaptive")
    g.add_argument("--stack", type=Path, default=None, help="default: bundled hotspot die")
    g.add_argument("--budgets", required=True, help="comma-separated cell counts")
    g.add_argument("--coarse", default="40,24")
    g.add_argument("--l-min", type=float, default=10.0, help="um")
    g.add_argument("--reference-cells", type=int, default=None, help="default: 16 x largest budget")
    g.add_argument("--workers", type=int, default=None)
    g.add_argument("--out", type=Path, default=Path("."))
    return p


def _run(args) -> int:
    workers = args.workers if args.workers is not None else default_workers()
    if workers < 1:
        raise InputError("--workers must be >= 1")
    if args.command == "simulate":
        cfg = RunConfig(args.stack, args.out, args.mode, parse_grid(args.grid), _pair(args.coarse, "--coarse"),
                        args.g_base, args.alpha, args.l_min * 1e-6, args.layer_division == "on",
                        args.var_threshold, args.max_iter, workers, args.method, args.dt, args.t_end,
                        args.scheme, args.signals, args.power_trace, [parse_probe(p) for p in args.probe],
                        args.image_size)
        summary = cmd_simulate(cfg)
        h = summary["hotspot"]
        print(f"cells {summary['grid']['cells']}  max T {h['T_max_K']:.4f} K in {h['layer']} "
              f"at ({h['x_um']:.1f}, {h['y_um']:.1f}) um")
        print(f"assembly {summary['timing']['assembly_s']:.4f} s  solve {summary['timing']['solve_s']:.4f} s")
    elif args.command == "tile":
        window = None
        if args.window:
            try:
                c = [um_to_nm(v) for v in args.window.split(",")]
            except ValueError:
                raise InputError(f"--window expects X0,Y0,X1,Y1, got {args.window!r}") from None
            if len(c) != 4:
                raise InputError(f"--window expects X0,Y0,X1,Y1, got {args.window!r}")
            window = Rect(*c)
        tiles = cmd_tile(args.layout, args.layer, TilingConfig(args.imax, args.rho_lo, args.rho_hi),
                         args.out, window, workers)
        print(f"{len(tiles)} tiles written to {Path(args.out) / 'tiles.csv'}")
    else:
        try:
            budgets = [int(b) for b in args.budgets.split(",") if b.strip()]
        except ValueError:
            raise InputError(f"--budgets expects integers, got {args.budgets!r}") from None
        sf = load_stack(args.stack or demo_path(HOTSPOT_DIE))
        rows, n_ref = grid_study(sf.stack, sf.powers, budgets, _pair(args.coarse, "--coarse"),
                                 args.l_min * 1e-6, args.reference_cells, workers)
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "grid_study.csv").write_text(study_csv(rows))
        print(f"reference: {n_ref} cells")
        for r in rows:
            print(f"budget {r.budget:>8}  {r.kind:<8} cells {r.cells:>8}  rmse {r.rmse:.6f} K")
    return 0


def main(argv: Optional[Sequence[str]] = None) -> int:
    logging.basicConfig(level=logging.WARNING, format="chiptherm: warning: %(message)s")
    args = _parser().parse_args(argv)
    try:
        return _run(args)
    except InputError as exc:
        print(f"chiptherm: error: {exc}", file=sys.stderr)
        return 2
    except NumericalError as exc:
        print(f"chiptherm: numerical failure: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"chiptherm: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())

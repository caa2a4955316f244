"""Line-oriented stack description files.

Grammar (``#`` starts a comment, lengths in micrometres)::

    material NAME
      conductivity K [K_VERTICAL]        # W/(m K); two values: in-plane, vertical
      density RHO                        # kg/m^3
      heat_capacity C                    # J/(kg K)
    end

    footprint X0 Y0 X1 Y1                # or: dimensions W H
    sink top|bottom
      h H_COEFF                          # W/(m^2 K)
      ambient T                          # K
    end
    initial_temperature T                # optional, K

    layer NAME                           # layers are listed bottom to top
      thickness H
      material NAME                      # one element covering the footprint
      element NAME X Y W H MATERIAL [power WATTS]
      floorplan FILE                     # lines: NAME X Y W H MATERIAL [power WATTS]
      layout FILE layer N feature MAT fill MAT [imax N] [rho_lo X] [rho_hi Y]
      source                             # the layer dissipates power
      power WATTS                        # shorthand for a 'material' source layer
    end

A layer uses exactly one of ``material``, ``element``/``floorplan`` lines or
``layout``. Powered elements use their own name as power id.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from .errors import InputError, StackError
from .geometry import Rect, build_spatial_index, merge_shapes
from .layout import load_layout
from .materials import Material
from .solver import PowerSignal
from .stack import FloorplanElement, Layer, Sink, StackDescription, validate_stack
from .tiler import TilingConfig, generate_tiles, tiles_to_floorplan


def um_to_nm(v: str | float) -> int:
    return int(round(float(v) * 1000))


@dataclass
class StackFile:
    stack: StackDescription
    powers: dict[str, float]
    materials: dict[str, Material]
    tiles: dict[str, list] = field(default_factory=dict)


def _lines(text: str, origin: str):
    for k, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if line:
            yield f"{origin}:{k}", line.split()


def _float(tok: str, where: str, what: str) -> float:
    try:
        return float(tok)
    except ValueError:
        raise StackError(f"{where}: {what} must be a number, got {tok!r}") from None


def _element_line(toks, where, materials):
    if len(toks) not in (6, 8) or (len(toks) == 8 and toks[6] != "power"):
        raise StackError(f"{where}: expected 'NAME X Y W H MATERIAL [power WATTS]'")
    name = toks[0]
    x, y, w, h = (_float(t, where, "coordinate") for t in toks[1:5])
    mat = materials.get(toks[5])
    if mat is None:
        raise StackError(f"{where}: unknown material {toks[5]!r}")
    x0, y0 = um_to_nm(x), um_to_nm(y)
    try:
        rect = Rect(x0, y0, x0 + um_to_nm(w), y0 + um_to_nm(h))
    except InputError as exc:
        raise StackError(f"{where}: element {name!r}: {exc}") from None
    power = _float(toks[7], where, "power") if len(toks) == 8 else None
    if power is not None and power < 0:
        raise StackError(f"{where}: power must be non-negative")
    return FloorplanElement(name, rect, mat, name if power is not None else None), power


def read_floorplan(path: Path, materials: dict[str, Material]):
    try:
        text = path.read_text()
    except OSError as exc:
        raise StackError(f"cannot read floorplan {path}: {exc}") from None
    return [_element_line(toks, where, materials) for where, toks in _lines(text, str(path))]


def parse_stack(text: str, base_dir: str | Path = ".", origin: str = "<stack>") -> StackFile:
    base_dir = Path(base_dir)
    materials: dict[str, Material] = {}
    powers: dict[str, float] = {}
    tiles_out: dict[str, list] = {}
    layers: list[Layer] = []
    footprint: Optional[Rect] = None
    sink: Optional[Sink] = None
    t_init: Optional[float] = None
    block: Optional[dict] = None
    where = origin

    for where, toks in _lines(text, origin):
        key = toks[0]
        if block is not None:
            if key == "end":
                if block["kind"] == "material":
                    materials[block["name"]] = _finish_material(block, where)
                elif block["kind"] == "sink":
                    sink = _finish_sink(block, where)
                else:
                    block["end"] = where
                    layers.append(block)  # resolved later, once the footprint is known
                block = None
            else:
                block["body"].append((where, toks))
            continue
        if key in ("material", "layer"):
            if len(toks) != 2:
                raise StackError(f"{where}: expected '{key} NAME'")
            block = {"kind": key, "name": toks[1], "body": [], "start": where}
        elif key == "sink":
            if len(toks) != 2:
                raise StackError(f"{where}: expected 'sink top|bottom'")
            block = {"kind": "sink", "name": toks[1], "body": [], "start": where}
        elif key == "footprint":
            if len(toks) != 5:
                raise StackError(f"{where}: expected 'footprint X0 Y0 X1 Y1'")
            c = [um_to_nm(_float(t, where, "coordinate")) for t in toks[1:]]
            footprint = _rect(c, where)
        elif key == "dimensions":
            if len(toks) != 3:
                raise StackError(f"{where}: expected 'dimensions W H'")
            footprint = _rect([0, 0] + [um_to_nm(_float(t, where, "size")) for t in toks[1:]], where)
        elif key == "initial_temperature":
            if len(toks) != 2:
                raise StackError(f"{where}: expected 'initial_temperature T'")
            t_init = _float(toks[1], where, "temperature")
        else:
            raise StackError(f"{where}: unknown keyword {key!r}")
    if block is not None:
        raise StackError(f"{block['start']}: block '{block['kind']} {block['name']}' lacks 'end'")
    if footprint is None:
        raise StackError(f"{origin}: missing 'footprint' or 'dimensions'")
    if sink is None:
        raise StackError(f"{origin}: missing 'sink' block")
    if not layers:
        raise StackError(f"{origin}: no layers")

    resolved = [_finish_layer(b, materials, footprint, base_dir, powers, tiles_out) for b in layers]
    seen: set[str] = set()
    for layer in resolved:
        for pid in layer.power_ids:
            if pid in seen:
                raise StackError(f"{origin}: power id {pid!r} used twice")
            seen.add(pid)
    stack = StackDescription(tuple(resolved), footprint, sink, t_init)
    try:
        validate_stack(stack)
    except StackError as exc:
        raise StackError(f"{origin}: {exc}") from None
    return StackFile(stack, powers, materials, tiles_out)


def load_stack(path: str | Path) -> StackFile:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise StackError(f"cannot read stack file {path}: {exc}") from None
    return parse_stack(text, path.parent, str(path))


def _rect(c, where):
    try:
        return Rect(*c)
    except InputError:
        raise StackError(f"{where}: empty footprint") from None


def _finish_material(b, where):
    props: dict[str, list[float]] = {}
    for w, toks in b["body"]:
        if toks[0] not in ("conductivity", "density", "heat_capacity"):
            raise StackError(f"{w}: unknown material property {toks[0]!r}")
        n_max = 2 if toks[0] == "conductivity" else 1
        if not 1 <= len(toks) - 1 <= n_max:
            raise StackError(f"{w}: wrong number of values for {toks[0]}")
        props[toks[0]] = [_float(t, w, toks[0]) for t in toks[1:]]
    for req in ("conductivity", "density", "heat_capacity"):
        if req not in props:
            raise StackError(f"{b['start']}: material {b['name']!r} lacks {req}")
    k = props["conductivity"]
    try:
        return Material(b["name"], k[0], k[-1], props["density"][0], props["heat_capacity"][0])
    except InputError as exc:
        raise StackError(f"{b['start']}: {exc}") from None


def _finish_sink(b, where):
    vals = {}
    for w, toks in b["body"]:
        if toks[0] not in ("h", "ambient") or len(toks) != 2:
            raise StackError(f"{w}: expected 'h VALUE' or 'ambient VALUE'")
        vals[toks[0]] = _float(toks[1], w, toks[0])
    for req in ("h", "ambient"):
        if req not in vals:
            raise StackError(f"{b['start']}: sink lacks '{req}'")
    try:
        return Sink(vals["h"], vals["ambient"], b["name"])
    except StackError as exc:
        raise StackError(f"{b['start']}: {exc}") from None


def _finish_layer(b, materials, footprint, base_dir, powers, tiles_out) -> Layer:
    name = b["name"]
    thickness = None
    is_source = False
    elements: list[FloorplanElement] = []
    single_power = None
    modes = set()
    for w, toks in b["body"]:
        key = toks[0]
        if key == "thickness":
            if len(toks) != 2:
                raise StackError(f"{w}: expected 'thickness H'")
            thickness = _float(toks[1], w, "thickness") * 1e-6
        elif key == "source":
            is_source = True
        elif key == "power":
            if len(toks) != 2:
                raise StackError(f"{w}: expected 'power WATTS'")
            single_power = _float(toks[1], w, "power")
        elif key == "material":
            modes.add("material")
            if len(toks) != 2 or toks[1] not in materials:
                raise StackError(f"{w}: unknown material {' '.join(toks[1:])!r}")
            elements.append(FloorplanElement(name, footprint, materials[toks[1]]))
        elif key == "element":
            modes.add("elements")
            e, p = _element_line(toks[1:], w, materials)
            elements.append(e)
            if p is not None:
                powers[e.power_id] = p
        elif key == "floorplan":
            modes.add("elements")
            if len(toks) != 2:
                raise StackError(f"{w}: expected 'floorplan FILE'")
            for e, p in read_floorplan(base_dir / toks[1], materials):
                elements.append(e)
                if p is not None:
                    powers[e.power_id] = p
        elif key == "layout":
            modes.add("layout")
            tiles, elems = _layout_elements(toks, w, materials, footprint, base_dir, name)
            tiles_out[name] = tiles
            elements.extend(elems)
        else:
            raise StackError(f"{w}: unknown layer keyword {key!r}")
    if thickness is None:
        raise StackError(f"{b['start']}: layer {name!r} lacks thickness")
    if len(modes) != 1:
        raise StackError(f"{b['start']}: layer {name!r} needs exactly one of material, "
                         f"element/floorplan or layout")
    if single_power is not None:
        if len(elements) != 1:
            raise StackError(f"{b['start']}: 'power' needs a single-element layer")
        elements[0] = FloorplanElement(name, elements[0].rect, elements[0].material, name)
        powers[name] = single_power
    if any(e.power_id for e in elements) and not is_source:
        raise StackError(f"{b['start']}: layer {name!r} has powered elements but no 'source' flag")
    return Layer(name, thickness, tuple(elements), is_source)


def _layout_elements(toks, where, materials, footprint, base_dir, layer_name):
    if len(toks) < 2:
        raise StackError(f"{where}: expected 'layout FILE layer N feature MAT fill MAT ...'")
    opts = {}
    rest = toks[2:]
    if len(rest) % 2:
        raise StackError(f"{where}: layout options come in 'key value' pairs")
    for k, v in zip(rest[0::2], rest[1::2]):
        opts[k] = v
    for req in ("layer", "feature", "fill"):
        if req not in opts:
            raise StackError(f"{where}: layout needs '{req}'")
    for k in ("feature", "fill"):
        if opts[k] not in materials:
            raise StackError(f"{where}: unknown material {opts[k]!r}")
    try:
        cfg = TilingConfig(int(opts.get("imax", 6)), float(opts.get("rho_lo", 0.02)),
                           float(opts.get("rho_hi", 0.98)))
        layout = load_layout(base_dir / toks[1], int(opts["layer"]))
    except (ValueError, OSError) as exc:
        raise StackError(f"{where}: {exc}") from None
    except InputError as exc:
        raise StackError(f"{where}: {exc}") from None
    merged = merge_shapes(layout.shapes)
    tiles = generate_tiles(build_spatial_index(merged), footprint, cfg)
    elems = tiles_to_floorplan(tiles, materials[opts["feature"]], materials[opts["fill"]],
                               prefix=f"{layer_name}.")
    return tiles, elems


def _num(tok: str, where: str) -> float:
    t = tok.strip().lower()
    scale = 1.0
    if t.endswith("pi"):
        t = t[:-2].rstrip("*") or "1"
        scale = math.pi
    try:
        return float(t) * scale
    except ValueError:
        raise InputError(f"{where}: not a number: {tok!r}") from None


def parse_signals(text: str, origin: str = "<signals>") -> dict[str, PowerSignal | float]:
    """Parse ``ID P0 T0 TAU2 OMEGA`` or ``ID constant WATTS`` lines.

    Numbers may carry a ``pi`` suffix, e.g. ``10pi``.
    """
    out: dict[str, PowerSignal | float] = {}
    for where, toks in _lines(text, origin):
        if len(toks) == 3 and toks[1] == "constant":
            out[toks[0]] = _num(toks[2], where)
        elif len(toks) == 5:
            P0, t0, tau2, omega = (_num(t, where) for t in toks[1:])
            out[toks[0]] = PowerSignal(P0, t0, tau2, omega)
        else:
            raise InputError(f"{where}: expected 'ID P0 T0 TAU2 OMEGA' or 'ID constant WATTS'")
    return out

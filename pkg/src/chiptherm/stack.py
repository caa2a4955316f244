"""Chip stack description, validation and adaptive layer division.

Footprints and element rectangles are integer nanometres (the same units as
layout geometry); thicknesses are metres.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field, replace
from typing import Callable, Optional, Sequence

from .errors import StackError
from .geometry import Rect, SpatialIndex
from .materials import Material, MixingRule, mix_parallel_series

NM2_TO_M2 = 1e-18


@dataclass(frozen=True)
class FloorplanElement:
    name: str
    rect: Rect
    material: Material
    power_id: Optional[str] = None

    @property
    def area_m2(self) -> float:
        return self.rect.area * NM2_TO_M2


@dataclass(frozen=True)
class Layer:
    name: str
    thickness: float
    elements: tuple[FloorplanElement, ...]
    is_source: bool = False
    functional: str = ""

    def __post_init__(self):
        object.__setattr__(self, "elements", tuple(self.elements))
        if not self.functional:
            object.__setattr__(self, "functional", self.name)

    @property
    def power_ids(self) -> list[str]:
        return [e.power_id for e in self.elements if e.power_id is not None]


@dataclass(frozen=True)
class Sink:
    h_coeff: float
    ambient: float
    face: str = "top"

    def __post_init__(self):
        if self.face not in ("top", "bottom"):
            raise StackError(f"sink face must be 'top' or 'bottom', got {self.face!r}")
        if not self.h_coeff > 0:
            raise StackError(f"sink heat transfer coefficient must be positive, got {self.h_coeff}")


@dataclass(frozen=True)
class StackDescription:
    """Layers listed bottom to top, all sharing ``footprint``."""

    layers: tuple[Layer, ...]
    footprint: Rect
    sink: Sink
    initial_temperature: Optional[float] = None

    def __post_init__(self):
        object.__setattr__(self, "layers", tuple(self.layers))

    @property
    def t_init(self) -> float:
        return self.sink.ambient if self.initial_temperature is None else self.initial_temperature

    def functional_layers(self) -> list[str]:
        seen: list[str] = []
        for layer in self.layers:
            if layer.functional not in seen:
                seen.append(layer.functional)
        return seen


ValidatedStack = StackDescription


def validate_stack(s: StackDescription) -> ValidatedStack:
    """Check every stack invariant; raise :class:`StackError` on the first failure."""
    if not s.layers:
        raise StackError("stack has no layers")
    fp = s.footprint
    for layer in s.layers:
        if not layer.thickness > 0:
            raise StackError(f"layer {layer.name!r}: thickness must be positive")
        if not layer.elements:
            raise StackError(f"layer {layer.name!r}: no floorplan elements")
        for e in layer.elements:
            if not fp.contains(e.rect):
                raise StackError(f"layer {layer.name!r}: footprint mismatch, element {e.name!r} "
                                 f"{e.rect.as_tuple()} lies outside footprint {fp.as_tuple()}")
            if e.power_id is not None and not layer.is_source:
                raise StackError(f"layer {layer.name!r}: element {e.name!r} carries power "
                                 f"but the layer is not a source layer")
        rects = [e.rect for e in layer.elements]
        index = SpatialIndex(rects)
        for i, r in enumerate(rects):
            for j in index.query(r):
                if j > i and r.overlap(rects[j]) > 0:
                    raise StackError(f"layer {layer.name!r}: elements {layer.elements[i].name!r} "
                                     f"and {layer.elements[j].name!r} overlap")
        covered = sum(r.area for r in rects)
        if covered != fp.area:
            raise StackError(f"layer {layer.name!r}: footprint mismatch, elements cover "
                             f"{covered} of {fp.area} nm^2")
    return s


# --- vertical resistance -----------------------------------------------------

def element_vertical_resistance(e: FloorplanElement, h: float) -> float:
    """R = h / (k_vertical * A) in K/W."""
    return h / (e.material.k_vertical * e.area_m2)


def layer_vertical_resistance(layer: Layer) -> float:
    """Parallel combination of the element resistances."""
    return 1.0 / sum(1.0 / element_vertical_resistance(e, layer.thickness) for e in layer.elements)


def resistance_variance(stack: StackDescription | Sequence[float]) -> float:
    r = [layer_vertical_resistance(l) for l in stack.layers] if isinstance(stack, StackDescription) \
        else list(stack)
    n = len(r)
    mean = sum(r) / n
    return sum((x - mean) ** 2 for x in r) / n


# --- layer division ----------------------------------------------------------

def _renumber(layers: list[Layer]) -> tuple[Layer, ...]:
    counts = Counter(l.functional for l in layers)
    seen: Counter = Counter()
    out = []
    for l in layers:
        if counts[l.functional] == 1:
            out.append(replace(l, name=l.functional))
        else:
            out.append(replace(l, name=f"{l.functional}.{seen[l.functional]}"))
            seen[l.functional] += 1
    return tuple(out)


def split_layer(stack: StackDescription, j: int, m: int = 2) -> StackDescription:
    """Replace layer ``j`` by ``m`` equal sublayers with the same elements.

    Sublayers of a source layer keep its power ids; the power map shares
    each source's power over its cells by volume, so the heat stays spread
    through the full thickness of the original layer.
    """
    if m < 1:
        raise StackError(f"split arity must be >= 1, got {m}")
    layer = stack.layers[j]
    h = layer.thickness / m
    subs = [replace(layer, thickness=h) for _ in range(m)]
    layers = list(stack.layers[:j]) + subs + list(stack.layers[j + 1:])
    return replace(stack, layers=_renumber(layers))


def divide_uniformly(stack: StackDescription, m: int | dict[str, int]) -> StackDescription:
    """Split every layer (or the named functional layers) into equal sublayers."""
    out = stack
    j = 0
    while j < len(out.layers):
        layer = out.layers[j]
        k = m.get(layer.functional, 1) if isinstance(m, dict) else m
        if k > 1:
            out = split_layer(out, j, k)
        j += max(k, 1)
    return out


Selector = Callable[[Sequence[float]], Sequence[int]]


def select_largest_resistance(r: Sequence[float]) -> list[int]:
    """Layers by decreasing resistance; ties go to the lowest index."""
    return sorted(range(len(r)), key=lambda j: (-r[j], j))


def select_best_variance(r: Sequence[float]) -> list[int]:
    """Layers by the variance left after halving them, lowest first."""
    def after(j):
        return resistance_variance(list(r[:j]) + [r[j] / 2, r[j] / 2] + list(r[j + 1:]))
    return sorted(range(len(r)), key=lambda j: (after(j), j))


@dataclass
class DivisionReport:
    variance: list[float] = field(default_factory=list)
    layers: list[list[tuple[str, int]]] = field(default_factory=list)
    splits: list[str] = field(default_factory=list)
    stop_reason: str = ""

    @property
    def normalized_variance(self) -> list[float]:
        v0 = self.variance[0] if self.variance else 0.0
        return [v / v0 if v0 > 0 else 0.0 for v in self.variance]

    def record(self, stack: StackDescription, var: float):
        self.variance.append(var)
        counts = Counter(l.functional for l in stack.layers)
        self.layers.append([(name, counts[name]) for name in stack.functional_layers()])


def adaptive_divide(stack: StackDescription, var_threshold_rel: float = 0.05, max_iter: int = 8,
                    select: Selector = select_largest_resistance,
                    ) -> tuple[StackDescription, DivisionReport]:
    """Iteratively halve high-resistance layers until the variance settles.

    Each iteration halves the first layer in ``select``'s ranking whose split
    does not raise Var(R). Iteration stops once Var/Var0 reaches
    ``var_threshold_rel``, after ``max_iter`` splits, or when every split
    would raise the variance.
    """
    report = DivisionReport()
    var0 = resistance_variance(stack)
    report.record(stack, var0)
    current = stack
    var = var0
    report.stop_reason = "max_iter"
    for _ in range(max_iter):
        if var0 == 0.0 or var / var0 <= var_threshold_rel:
            report.stop_reason = "threshold"
            break
        r = [layer_vertical_resistance(l) for l in current.layers]
        for j in select(r):
            trial = split_layer(current, j, 2)
            v = resistance_variance(trial)
            if v <= var:
                break
        else:
            report.stop_reason = "every split would raise the variance"
            break
        report.splits.append(current.layers[j].name)
        current, var = trial, v
        report.record(current, var)
    return current, report


def homogenize_layer(layer: Layer, rule: MixingRule = mix_parallel_series) -> Layer:
    """Collapse a layer into one element made of the area-averaged material."""
    ids = {e.power_id for e in layer.elements}
    if len(ids) > 1:
        raise StackError(f"layer {layer.name!r}: cannot homogenize several power sources")
    rects = [e.rect for e in layer.elements]
    box = Rect(min(r.x0 for r in rects), min(r.y0 for r in rects),
               max(r.x1 for r in rects), max(r.y1 for r in rects))
    areas: dict[Material, int] = {}
    for e in layer.elements:
        areas[e.material] = areas.get(e.material, 0) + e.rect.area
    total = sum(areas.values())
    mats = list(areas)
    if len(mats) == 1:
        mat = mats[0]
    else:
        mat = rule([areas[m] / total for m in mats], mats, f"{layer.name}-homogenized")
    return replace(layer, elements=(FloorplanElement(layer.name, box, mat, ids.pop()),))

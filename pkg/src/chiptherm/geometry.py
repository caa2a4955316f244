"""Integer-coordinate planar geometry used by layout ingestion and tiling.

All coordinates are integer database units (1 unit = 1 nm). Areas are
computed with the integer shoelace formula and returned as exact
:class:`fractions.Fraction` values, so that overlap ratios partition
exactly under quadtree subdivision.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Sequence

import pyclipper

from .errors import GeometryError

Point = tuple[int, int]


def shoelace2(pts: Sequence[tuple]) -> int | Fraction:
    """Twice the signed area of a closed ring (positive when counter-clockwise)."""
    n = len(pts)
    s = 0
    for i in range(n):
        x0, y0 = pts[i]
        x1, y1 = pts[i - n + 1]
        s += x0 * y1 - x1 * y0
    return s


def _dedupe(pts: Iterable[Sequence[int]]) -> list[Point]:
    out: list[Point] = []
    for p in pts:
        q = (int(p[0]), int(p[1]))
        if not out or out[-1] != q:
            out.append(q)
    while len(out) > 1 and out[0] == out[-1]:
        out.pop()
    return out


def _canonical_ring(pts: list[Point], ccw: bool) -> tuple[Point, ...]:
    # remove collinear vertices, fix orientation, rotate to the smallest vertex
    changed = True
    while changed and len(pts) > 3:
        changed = False
        n = len(pts)
        for i in range(n):
            a, b, c = pts[i - 1], pts[i], pts[(i + 1) % n]
            cross = (b[0] - a[0]) * (c[1] - b[1]) - (b[1] - a[1]) * (c[0] - b[0])
            if cross == 0:
                del pts[i]
                changed = True
                break
    if (shoelace2(pts) > 0) != ccw:
        pts = pts[::-1]
    k = pts.index(min(pts))
    return tuple(pts[k:] + pts[:k])


@dataclass(frozen=True)
class Rect:
    x0: int
    y0: int
    x1: int
    y1: int

    def __post_init__(self):
        if not (self.x0 < self.x1 and self.y0 < self.y1):
            raise GeometryError(f"invalid rectangle {self.x0, self.y0, self.x1, self.y1}")

    @property
    def width(self) -> int:
        return self.x1 - self.x0

    @property
    def height(self) -> int:
        return self.y1 - self.y0

    @property
    def area(self) -> int:
        return (self.x1 - self.x0) * (self.y1 - self.y0)

    def intersects(self, other: "Rect") -> bool:
        """Closed-set test: touching edges count as intersecting."""
        return (self.x0 <= other.x1 and other.x0 <= self.x1
                and self.y0 <= other.y1 and other.y0 <= self.y1)

    def overlap(self, other: "Rect") -> int:
        w = min(self.x1, other.x1) - max(self.x0, other.x0)
        h = min(self.y1, other.y1) - max(self.y0, other.y0)
        return w * h if w > 0 and h > 0 else 0

    def contains(self, other: "Rect") -> bool:
        return (self.x0 <= other.x0 and other.x1 <= self.x1
                and self.y0 <= other.y0 and other.y1 <= self.y1)

    def as_tuple(self) -> tuple[int, int, int, int]:
        return (self.x0, self.y0, self.x1, self.y1)

    def to_polygon(self) -> "Polygon":
        return Polygon([(self.x0, self.y0), (self.x1, self.y0),
                        (self.x1, self.y1), (self.x0, self.y1)])


@dataclass(frozen=True)
class Polygon:
    """A simple polygon, optionally with holes.

    The outer ring is stored counter-clockwise and the holes clockwise, each
    rotated to start at its lexicographically smallest vertex with collinear
    vertices removed. Two polygons describing the same region therefore
    compare equal.
    """

    vertices: tuple[Point, ...]
    holes: tuple[tuple[Point, ...], ...] = ()
    _area2: int = field(init=False, repr=False, compare=False)
    _bbox: Rect = field(init=False, repr=False, compare=False)

    def __init__(self, vertices, holes=(), name=None):
        outer = _dedupe(vertices)
        label = f" ({name})" if name is not None else ""
        if len(set(outer)) < 3:
            raise GeometryError(f"degenerate polygon{label}: fewer than 3 distinct vertices")
        if shoelace2(outer) == 0:
            raise GeometryError(f"degenerate polygon{label}: zero area (collinear vertices)")
        rings = []
        for h in holes:
            hp = _dedupe(h)
            if len(set(hp)) < 3 or shoelace2(hp) == 0:
                raise GeometryError(f"degenerate hole in polygon{label}")
            rings.append(_canonical_ring(hp, ccw=False))
        object.__setattr__(self, "vertices", _canonical_ring(outer, ccw=True))
        object.__setattr__(self, "holes", tuple(sorted(rings)))
        a2 = shoelace2(self.vertices) + sum(shoelace2(h) for h in self.holes)
        object.__setattr__(self, "_area2", a2)
        xs = [p[0] for p in self.vertices]
        ys = [p[1] for p in self.vertices]
        object.__setattr__(self, "_bbox", Rect(min(xs), min(ys), max(xs), max(ys)))

    @property
    def area(self) -> Fraction:
        return Fraction(self._area2, 2)

    @property
    def bbox(self) -> Rect:
        return self._bbox

    @property
    def is_rectangle(self) -> bool:
        return not self.holes and len(self.vertices) == 4 and self._area2 == 2 * self._bbox.area

    def rings(self) -> list[tuple[Point, ...]]:
        return [self.vertices, *self.holes]


@dataclass(frozen=True)
class DisjointPolygonSet:
    """Polygons (with holes) whose interiors are pairwise disjoint."""

    polygons: tuple[Polygon, ...] = ()

    @property
    def area(self) -> Fraction:
        return sum((p.area for p in self.polygons), Fraction(0))

    def __len__(self):
        return len(self.polygons)

    def __iter__(self):
        return iter(self.polygons)


def _as_polygon(shape, i: int) -> Polygon:
    if isinstance(shape, Polygon):
        return shape
    if isinstance(shape, Rect):
        return shape.to_polygon()
    try:
        return Polygon(shape, name=f"shape #{i}")
    except GeometryError:
        raise
    except (TypeError, ValueError, IndexError) as exc:
        raise GeometryError(f"shape #{i}: not a vertex list ({exc})") from None


def merge_shapes(shapes: Sequence) -> DisjointPolygonSet:
    """Union arbitrary polygons into a set of disjoint polygons with holes.

    ``shapes`` may hold :class:`Polygon`, :class:`Rect` or raw vertex lists.
    Raw vertex lists are validated here; a degenerate one raises
    :class:`GeometryError` naming its position in the input.
    """
    polys = [_as_polygon(s, i) for i, s in enumerate(shapes)]
    if not polys:
        return DisjointPolygonSet(())
    pc = pyclipper.Pyclipper()
    for p in polys:
        for ring in p.rings():
            pc.AddPath(list(ring), pyclipper.PT_SUBJECT, True)
    tree = pc.Execute2(pyclipper.CT_UNION, pyclipper.PFT_NONZERO, pyclipper.PFT_NONZERO)

    out: list[Polygon] = []

    def walk(node):
        for child in node.Childs:
            if child.IsHole:
                walk(child)
                continue
            holes = [h.Contour for h in child.Childs if h.IsHole and len(h.Contour) >= 3]
            out.append(Polygon(child.Contour, holes))
            for h in child.Childs:
                walk(h)

    walk(tree)
    out.sort(key=lambda p: (p.bbox.y0, p.bbox.x0, p.vertices))
    return DisjointPolygonSet(tuple(out))


def bounding_window(shapes: DisjointPolygonSet | Sequence[Polygon]) -> Rect:
    polys = list(shapes)
    if not polys:
        raise GeometryError("no geometry on layer")
    return Rect(min(p.bbox.x0 for p in polys), min(p.bbox.y0 for p in polys),
                max(p.bbox.x1 for p in polys), max(p.bbox.y1 for p in polys))


# --- rectangle clipping ------------------------------------------------------

def _div(num, den):
    if isinstance(num, int) and isinstance(den, int) and num % den == 0:
        return num // den
    return Fraction(num) / den


def _clip_edge(pts, inside, cross):
    out = []
    n = len(pts)
    for i in range(n):
        cur, prev = pts[i], pts[i - 1]
        cin, pin = inside(cur), inside(prev)
        if cin:
            if not pin:
                out.append(cross(prev, cur))
            out.append(cur)
        elif pin:
            out.append(cross(prev, cur))
    return out


def _clip_ring(ring, r: Rect):
    pts = list(ring)

    def at_x(c):
        def f(p, q):
            return (c, p[1] + _div((q[1] - p[1]) * (c - p[0]), q[0] - p[0]))
        return f

    def at_y(c):
        def f(p, q):
            return (p[0] + _div((q[0] - p[0]) * (c - p[1]), q[1] - p[1]), c)
        return f

    for inside, cross in (
        (lambda p: p[0] >= r.x0, at_x(r.x0)),
        (lambda p: p[0] <= r.x1, at_x(r.x1)),
        (lambda p: p[1] >= r.y0, at_y(r.y0)),
        (lambda p: p[1] <= r.y1, at_y(r.y1)),
    ):
        if not pts:
            break
        pts = _clip_edge(pts, inside, cross)
    return pts


def polygon_overlap_area(region: Rect, poly: Polygon) -> Fraction:
    """Exact area of ``poly`` inside ``region``."""
    bb = poly.bbox
    if region.contains(bb):
        return poly.area
    if region.overlap(bb) == 0:
        return Fraction(0)
    if poly.is_rectangle:
        return Fraction(region.overlap(bb))
    total = 0
    for ring in poly.rings():
        clipped = _clip_ring(ring, region)
        if len(clipped) >= 3:
            total += shoelace2(clipped)
    return Fraction(total) / 2


def overlap_area(region: Rect, candidates: Iterable[Polygon]) -> Fraction:
    """Area of ``region`` covered by pairwise-disjoint ``candidates`` (exact)."""
    return sum((polygon_overlap_area(region, p) for p in candidates), Fraction(0))


# --- bounding-box hierarchy --------------------------------------------------

@dataclass(frozen=True)
class _Node:
    box: tuple[int, int, int, int]
    children: tuple = ()
    ids: tuple[int, ...] = ()


def _union_box(boxes):
    return (min(b[0] for b in boxes), min(b[1] for b in boxes),
            max(b[2] for b in boxes), max(b[3] for b in boxes))


class SpatialIndex:
    """Static R-tree built by sort-tile-recursive packing.

    ``query`` returns the ids of every entry whose bounding box intersects
    the query rectangle (touching counts), sorted ascending.
    """

    def __init__(self, boxes: Sequence[Rect], items: Sequence | None = None, capacity: int = 16):
        self.boxes = tuple(boxes)
        self.items = tuple(items) if items is not None else None
        self.capacity = capacity
        self._root = self._build() if self.boxes else None

    def __len__(self):
        return len(self.boxes)

    def _build(self) -> _Node:
        cap = self.capacity
        nodes = [_Node(b.as_tuple(), ids=(i,)) for i, b in enumerate(self.boxes)]
        leaf_level = True
        while len(nodes) > 1 or leaf_level:
            nodes = self._pack(nodes, cap, leaf_level)
            leaf_level = False
        return nodes[0]

    @staticmethod
    def _pack(nodes, cap, leaf_level):
        n = len(nodes)
        n_groups = -(-n // cap)
        n_slices = max(1, int(n_groups ** 0.5 + 0.999999))
        per_slice = -(-n // n_slices)
        by_x = sorted(nodes, key=lambda nd: (nd.box[0] + nd.box[2], nd.box[1] + nd.box[3]))
        packed = []
        for s in range(0, n, per_slice):
            strip = sorted(by_x[s:s + per_slice], key=lambda nd: (nd.box[1] + nd.box[3], nd.box[0]))
            for g in range(0, len(strip), cap):
                group = strip[g:g + cap]
                box = _union_box([nd.box for nd in group])
                if leaf_level:
                    packed.append(_Node(box, ids=tuple(i for nd in group for i in nd.ids)))
                else:
                    packed.append(_Node(box, children=tuple(group)))
        return packed

    def query(self, rect: Rect) -> list[int]:
        if self._root is None:
            return []
        q = rect.as_tuple()
        found: list[int] = []
        stack = [self._root]
        boxes = self.boxes
        while stack:
            nd = stack.pop()
            b = nd.box
            if b[0] > q[2] or q[0] > b[2] or b[1] > q[3] or q[1] > b[3]:
                continue
            if nd.children:
                stack.extend(nd.children)
            else:
                found.extend(i for i in nd.ids if boxes[i].intersects(rect))
        found.sort()
        return found

    def query_items(self, rect: Rect) -> list:
        if self.items is None:
            raise TypeError("index was built without items")
        return [self.items[i] for i in self.query(rect)]


def build_spatial_index(shapes: DisjointPolygonSet | Sequence[Polygon]) -> SpatialIndex:
    polys = list(shapes)
    return SpatialIndex([p.bbox for p in polys], polys)

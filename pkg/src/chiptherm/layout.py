"""Layout readers: a flat GDSII stream subset and a JSON polygon format.

Both readers return a :class:`LayoutLayer` with shapes in integer
nanometres. Paths are polygonized with flush ends and miter joins.
"""

from __future__ import annotations

import json
import logging
import math
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

from .errors import GeometryError, LayoutError
from .geometry import Polygon, merge_shapes

log = logging.getLogger(__name__)

# record types
HEADER, BGNLIB, LIBNAME, UNITS, ENDLIB = 0x00, 0x01, 0x02, 0x03, 0x04
BGNSTR, STRNAME, ENDSTR = 0x05, 0x06, 0x07
BOUNDARY, PATH, SREF, AREF, TEXT = 0x08, 0x09, 0x0A, 0x0B, 0x0C
LAYER, DATATYPE, WIDTH, XY, ENDEL = 0x0D, 0x0E, 0x0F, 0x10, 0x11
NODE, BOX = 0x15, 0x2D

# data types
NODATA, INT2, INT4, REAL8, ASCII = 0x00, 0x02, 0x03, 0x05, 0x06

_RECORD_NAMES = {
    HEADER: "HEADER", BGNLIB: "BGNLIB", LIBNAME: "LIBNAME", UNITS: "UNITS",
    ENDLIB: "ENDLIB", BGNSTR: "BGNSTR", STRNAME: "STRNAME", ENDSTR: "ENDSTR",
    BOUNDARY: "BOUNDARY", PATH: "PATH", SREF: "SREF", AREF: "AREF", TEXT: "TEXT",
    LAYER: "LAYER", DATATYPE: "DATATYPE", WIDTH: "WIDTH", XY: "XY", ENDEL: "ENDEL",
    NODE: "NODE", BOX: "BOX", 0x21: "PATHTYPE",
}


def _rname(rtype: int) -> str:
    return _RECORD_NAMES.get(rtype, f"0x{rtype:02X}")


@dataclass(frozen=True)
class PathElement:
    centerline: tuple[tuple[int, int], ...]
    width: int
    path_type: str = "flush"

    def __post_init__(self):
        if self.width <= 0:
            raise LayoutError(f"path width must be positive, got {self.width}")
        if len(self.centerline) < 2:
            raise LayoutError("path needs at least 2 centerline points")
        if self.path_type != "flush":
            raise LayoutError(f"unsupported path type {self.path_type!r}")


@dataclass(frozen=True)
class LayoutLayer:
    layer_number: int
    shapes: tuple[Polygon, ...] = ()
    unit_nm: float = 1.0
    warnings: tuple[str, ...] = field(default=(), compare=False)

    @property
    def skipped(self) -> int:
        return len(self.warnings)

    def normalized(self) -> tuple[Polygon, ...]:
        """Shapes in a canonical order, for equality checks across formats."""
        return tuple(sorted(self.shapes, key=lambda p: (p.vertices, p.holes)))


# --- path polygonization -----------------------------------------------------

def _segment_rect(p, q, w):
    (x0, y0), (x1, y1) = p, q
    lo = w // 2
    if y0 == y1:
        return [(min(x0, x1), y0 - lo), (max(x0, x1), y0 - lo),
                (max(x0, x1), y0 - lo + w), (min(x0, x1), y0 - lo + w)]
    if x0 == x1:
        return [(x0 - lo, min(y0, y1)), (x0 - lo + w, min(y0, y1)),
                (x0 - lo + w, max(y0, y1)), (x0 - lo, max(y0, y1))]
    dx, dy = x1 - x0, y1 - y0
    L = math.hypot(dx, dy)
    nx, ny = -dy / L * w / 2, dx / L * w / 2
    return [(round(x0 - nx), round(y0 - ny)), (round(x1 - nx), round(y1 - ny)),
            (round(x1 + nx), round(y1 + ny)), (round(x0 + nx), round(y0 + ny))]


def _miter_fill(a, p, b, w):
    d1 = (p[0] - a[0], p[1] - a[1])
    d2 = (b[0] - p[0], b[1] - p[1])
    cross = d1[0] * d2[1] - d1[1] * d2[0]
    if cross == 0:
        return None
    lo = w // 2
    axis1 = d1[0] == 0 or d1[1] == 0
    axis2 = d2[0] == 0 or d2[1] == 0
    if axis1 and axis2:
        # right-angle turn: the joint square closes the outer corner exactly
        x = p[0] - lo
        y = p[1] - lo
        return [(x, y), (x + w, y), (x + w, y + w), (x, y + w)]
    l1, l2 = math.hypot(*d1), math.hypot(*d2)
    n1 = (-d1[1] / l1, d1[0] / l1)
    n2 = (-d2[1] / l2, d2[0] / l2)
    s = -1.0 if cross > 0 else 1.0
    h = w / 2
    c1 = (p[0] + s * h * n1[0], p[1] + s * h * n1[1])
    c2 = (p[0] + s * h * n2[0], p[1] + s * h * n2[1])
    dot = n1[0] * n2[0] + n1[1] * n2[1]
    pts = [p, c1]
    if 1.0 + dot > 0.1:
        m = s * h / (1.0 + dot)
        pts.append((p[0] + m * (n1[0] + n2[0]), p[1] + m * (n1[1] + n2[1])))
    pts.append(c2)
    return [(round(x), round(y)) for x, y in pts]


def polygonize_path(path: PathElement) -> list[Polygon]:
    """Convert a path to disjoint polygons (flush ends, miter joins)."""
    pts: list[tuple[int, int]] = []
    for i, q in enumerate(path.centerline):
        q = (int(q[0]), int(q[1]))
        if pts and q == pts[-1]:
            log.warning("path point %d: zero-length segment skipped", i)
            continue
        pts.append(q)
    if len(pts) < 2:
        log.warning("path has no segment of positive length")
        return []
    w = path.width
    pieces = [_segment_rect(pts[i], pts[i + 1], w) for i in range(len(pts) - 1)]
    for i in range(1, len(pts) - 1):
        fill = _miter_fill(pts[i - 1], pts[i], pts[i + 1], w)
        if fill is not None:
            pieces.append(fill)
    polys = []
    for piece in pieces:
        try:
            polys.append(Polygon(piece))
        except GeometryError:
            continue
    return list(merge_shapes(polys).polygons)


# --- GDSII -------------------------------------------------------------------

def decode_real8(b: bytes) -> float:
    """GDSII excess-64 base-16 eight-byte real."""
    sign = -1.0 if b[0] & 0x80 else 1.0
    exp = (b[0] & 0x7F) - 64
    mant = int.from_bytes(b[1:8], "big")
    return sign * mant / float(1 << 56) * 16.0 ** exp


def encode_real8(x: float) -> bytes:
    if x == 0:
        return bytes(8)
    sign = 0x80 if x < 0 else 0
    x = abs(x)
    exp = 64
    while x >= 1.0:
        x /= 16.0
        exp += 1
    while x < 1.0 / 16.0:
        x *= 16.0
        exp -= 1
    mant = int(round(x * (1 << 56)))
    if mant >= 1 << 56:
        mant >>= 4
        exp += 1
    return bytes([sign | exp]) + mant.to_bytes(7, "big")


def _records(data: bytes):
    off = 0
    n = len(data)
    while off < n:
        if off + 4 > n:
            raise LayoutError(f"unexpected end of stream at offset {off}")
        length, rtype, dtype = struct.unpack_from(">HBB", data, off)
        if length == 0 and not any(data[off:]):
            return  # zero padding after ENDLIB
        if length < 4 or length % 2:
            raise LayoutError(f"malformed record length {length} at offset {off}")
        if off + length > n:
            raise LayoutError(f"unexpected end of stream at offset {n}")
        yield off, rtype, dtype, data[off + 4:off + length]
        off += length


def _int_values(payload: bytes, dtype: int, off: int) -> tuple[int, ...]:
    if dtype == INT2:
        return struct.unpack(f">{len(payload) // 2}h", payload)
    if dtype == INT4:
        return struct.unpack(f">{len(payload) // 4}i", payload)
    raise LayoutError(f"record at offset {off}: expected integer data, got data type {dtype}")


def parse_gdsii_subset(data: bytes, layer: int) -> LayoutLayer:
    """Parse one flat GDSII structure and return the shapes on ``layer``.

    Parameters
    ----------
    data : bytes
        The whole stream.
    layer : int
        GDSII layer number to extract; other layers are ignored.

    Raises
    ------
    LayoutError
        On truncated or malformed records, on SREF/AREF hierarchy, and on
        more than one structure.
    """
    warnings: list[str] = []
    shapes: list[Polygon] = []
    nm_per_db = 1.0
    n_struct = 0
    seen_header = False
    ended = False
    elem = None  # dict while inside BOUNDARY/PATH, "skip" inside other elements

    for off, rtype, dtype, payload in _records(data):
        if not seen_header:
            if rtype != HEADER:
                raise LayoutError(f"stream must begin with HEADER, found {_rname(rtype)} at offset {off}")
            seen_header = True
            continue
        if ended:
            raise LayoutError(f"record {_rname(rtype)} after ENDLIB at offset {off}")
        if rtype in (SREF, AREF):
            raise LayoutError(f"hierarchical GDSII not supported; flatten first (offset {off})")

        if elem is None:
            if rtype in (BOUNDARY, PATH):
                elem = {"kind": rtype, "off": off, "layer": None, "width": 0, "xy": None}
            elif rtype in (TEXT, BOX, NODE):
                warnings.append(f"offset {off}: {_rname(rtype)} element skipped")
                elem = "skip"
            elif rtype == BGNSTR:
                n_struct += 1
                if n_struct > 1:
                    raise LayoutError(f"multiple structures not supported; flatten first (offset {off})")
            elif rtype == UNITS:
                if dtype != REAL8 or len(payload) != 16:
                    raise LayoutError(f"malformed UNITS record at offset {off}")
                m_per_db = decode_real8(payload[8:16])
                nm_per_db = m_per_db / 1e-9
            elif rtype == ENDLIB:
                ended = True
            elif rtype in (BGNLIB, LIBNAME, STRNAME, ENDSTR):
                pass
            else:
                warnings.append(f"offset {off}: unsupported record {_rname(rtype)} skipped")
            continue

        if elem == "skip":
            if rtype == ENDEL:
                elem = None
            continue

        if rtype == LAYER:
            elem["layer"] = _int_values(payload, dtype, off)[0]
        elif rtype == DATATYPE:
            pass
        elif rtype == WIDTH:
            elem["width"] = abs(_int_values(payload, dtype, off)[0])
        elif rtype == XY:
            v = _int_values(payload, dtype, off)
            if len(v) % 2:
                raise LayoutError(f"odd coordinate count in XY at offset {off}")
            elem["xy"] = list(zip(v[0::2], v[1::2]))
        elif rtype == ENDEL:
            shapes.extend(_finish_element(elem, layer, nm_per_db, warnings))
            elem = None
        else:
            warnings.append(f"offset {off}: unsupported record {_rname(rtype)} in element skipped")

    if not seen_header:
        raise LayoutError("unexpected end of stream at offset 0")
    if elem is not None or not ended:
        raise LayoutError(f"unexpected end of stream at offset {len(data)}")
    for w in warnings:
        log.warning("GDSII: %s", w)
    return LayoutLayer(layer, tuple(shapes), unit_nm=nm_per_db, warnings=tuple(warnings))


def _scale(points, nm_per_db, warnings, off):
    if abs(nm_per_db - round(nm_per_db)) < 1e-9:
        k = int(round(nm_per_db))
        return [(x * k, y * k) for x, y in points]
    warnings.append(f"offset {off}: database unit {nm_per_db} nm is not integral; snapped to 1 nm")
    return [(round(x * nm_per_db), round(y * nm_per_db)) for x, y in points]


def _finish_element(elem, layer, nm_per_db, warnings):
    off = elem["off"]
    if elem["layer"] is None or elem["xy"] is None:
        raise LayoutError(f"element at offset {off} lacks LAYER or XY")
    if elem["layer"] != layer:
        return []
    pts = _scale(elem["xy"], nm_per_db, warnings, off)
    if elem["kind"] == BOUNDARY:
        if len(pts) > 1 and pts[0] == pts[-1]:
            pts = pts[:-1]
        try:
            return [Polygon(pts, name=f"BOUNDARY at offset {off}")]
        except GeometryError as exc:
            raise LayoutError(str(exc)) from None
    width = elem["width"]
    if abs(nm_per_db - round(nm_per_db)) < 1e-9:
        width *= int(round(nm_per_db))
    else:
        width = round(width * nm_per_db)
    try:
        return polygonize_path(PathElement(tuple(pts), width))
    except LayoutError as exc:
        raise LayoutError(f"PATH at offset {off}: {exc}") from None


def _record(rtype: int, dtype: int, payload: bytes = b"") -> bytes:
    if len(payload) % 2:
        payload += b"\0"
    return struct.pack(">HBB", 4 + len(payload), rtype, dtype) + payload


def write_gdsii(shapes: Iterable[Polygon | Sequence], layer: int, paths: Iterable[PathElement] = (),
                unit_nm: int = 1, libname: str = "LIB", strname: str = "TOP") -> bytes:
    """Serialize polygons and paths into a flat single-structure stream."""
    date = struct.pack(">12h", *([2000, 1, 1, 0, 0, 0] * 2))
    m_per_db = unit_nm * 1e-9
    out = [
        _record(HEADER, INT2, struct.pack(">h", 600)),
        _record(BGNLIB, INT2, date),
        _record(LIBNAME, ASCII, libname.encode()),
        _record(UNITS, REAL8, encode_real8(m_per_db / 1e-6) + encode_real8(m_per_db)),
        _record(BGNSTR, INT2, date),
        _record(STRNAME, ASCII, strname.encode()),
    ]
    for s in shapes:
        pts = list(s.vertices if isinstance(s, Polygon) else s)
        if isinstance(s, Polygon) and s.holes:
            raise LayoutError("polygons with holes cannot be written as BOUNDARY")
        pts = pts + [pts[0]]
        out += [_record(BOUNDARY, NODATA), _record(LAYER, INT2, struct.pack(">h", layer)),
                _record(DATATYPE, INT2, struct.pack(">h", 0)),
                _record(XY, INT4, struct.pack(f">{2 * len(pts)}i", *[c for p in pts for c in p])),
                _record(ENDEL, NODATA)]
    for p in paths:
        pts = list(p.centerline)
        out += [_record(PATH, NODATA), _record(LAYER, INT2, struct.pack(">h", layer)),
                _record(DATATYPE, INT2, struct.pack(">h", 0)),
                _record(WIDTH, INT4, struct.pack(">i", p.width)),
                _record(XY, INT4, struct.pack(f">{2 * len(pts)}i", *[c for q in pts for c in q])),
                _record(ENDEL, NODATA)]
    out += [_record(ENDSTR, NODATA), _record(ENDLIB, NODATA)]
    return b"".join(out)


# --- JSON --------------------------------------------------------------------

def _fail(path: str, msg: str):
    raise LayoutError(f"{path}: {msg}")


def _need_int(v, path):
    if isinstance(v, bool) or not isinstance(v, int):
        _fail(path, f"expected integer, got {json.dumps(v)}")
    return v


def _points(v, path, min_len):
    if not isinstance(v, list):
        _fail(path, "expected a list of [x, y] points")
    if len(v) < min_len:
        _fail(path, f"expected at least {min_len} points, got {len(v)}")
    pts = []
    for i, p in enumerate(v):
        if not (isinstance(p, list) and len(p) == 2):
            _fail(f"{path}[{i}]", "expected an [x, y] pair")
        pts.append((_need_int(p[0], f"{path}[{i}][0]"), _need_int(p[1], f"{path}[{i}][1]")))
    return pts


def parse_polygon_json(text: str) -> LayoutLayer:
    """Parse the JSON layout document.

    Schema: ``{"layer": int, "unit_nm": int, "polygons": [[[x, y], ...], ...],
    "paths": [{"points": [[x, y], ...], "width": int}, ...]}``. Coordinates
    and widths are multiplied by ``unit_nm``. Errors name the JSON path of
    the offending field.
    """
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise LayoutError(f"invalid JSON: {exc}") from None
    if not isinstance(doc, dict):
        _fail("$", "expected an object")
    unknown = set(doc) - {"layer", "unit_nm", "polygons", "paths"}
    if unknown:
        _fail(f"$.{sorted(unknown)[0]}", "unknown field")
    if "layer" not in doc:
        _fail("$.layer", "missing required field")
    layer = _need_int(doc["layer"], "$.layer")
    unit = _need_int(doc.get("unit_nm", 1), "$.unit_nm")
    if unit <= 0:
        _fail("$.unit_nm", "must be positive")
    polys_doc = doc.get("polygons", [])
    paths_doc = doc.get("paths", [])
    if not isinstance(polys_doc, list):
        _fail("$.polygons", "expected a list")
    if not isinstance(paths_doc, list):
        _fail("$.paths", "expected a list")

    shapes: list[Polygon] = []
    for i, raw in enumerate(polys_doc):
        pts = _points(raw, f"$.polygons[{i}]", 3)
        if len(pts) > 1 and pts[0] == pts[-1]:
            pts = pts[:-1]
        try:
            shapes.append(Polygon([(x * unit, y * unit) for x, y in pts], name=f"$.polygons[{i}]"))
        except GeometryError as exc:
            raise LayoutError(str(exc)) from None
    for i, raw in enumerate(paths_doc):
        path = f"$.paths[{i}]"
        if not isinstance(raw, dict):
            _fail(path, "expected an object with 'points' and 'width'")
        for key in ("points", "width"):
            if key not in raw:
                _fail(f"{path}.{key}", "missing required field")
        pts = _points(raw["points"], f"{path}.points", 2)
        width = _need_int(raw["width"], f"{path}.width")
        if width <= 0:
            _fail(f"{path}.width", "must be positive")
        pe = PathElement(tuple((x * unit, y * unit) for x, y in pts), width * unit)
        shapes.extend(polygonize_path(pe))
    return LayoutLayer(layer, tuple(shapes), unit_nm=float(unit))


def load_layout(path: str | Path, layer: int) -> LayoutLayer:
    """Read ``path`` (``.gds``/``.gdsii`` or ``.json``) and select ``layer``."""
    path = Path(path)
    if path.suffix.lower() in (".gds", ".gdsii", ".gds2"):
        return parse_gdsii_subset(path.read_bytes(), layer)
    doc = parse_polygon_json(path.read_text())
    if doc.layer_number != layer:
        log.warning("%s holds layer %d, requested %d: empty", path, doc.layer_number, layer)
        return LayoutLayer(layer, (), unit_nm=doc.unit_nm)
    return doc

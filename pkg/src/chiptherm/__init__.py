"""Compact thermal models of 2.5D/3D chip stacks.

Layout geometry is tiled into effective-material floorplans, stacks are
divided vertically where thermal resistance is uneven, grids are refined
laterally where gradients are steep, and the resulting RC network is solved
in steady state or over time.
"""

from .errors import (ChipThermError, GeometryError, InputError, LayoutError, NumericalError,
                     SingularSystemError, StackError)
from .geometry import DisjointPolygonSet, Polygon, Rect, SpatialIndex, merge_shapes
from .grid import RefineConfig, ThermalGrid, build_nonuniform_grid, build_uniform_grid, refine_loop
from .layout import load_layout, parse_gdsii_subset, parse_polygon_json
from .materials import Material, effective_material
from .network import SparseSystem, assemble
from .oracle import analytic_slab, dense_solve, rmse
from .solver import PowerSignal, TemperatureField, TransientConfig, power_signal, run_transient, \
    solve_steady, step_transient
from .stack import FloorplanElement, Layer, Sink, StackDescription, adaptive_divide, validate_stack
from .stackfile import load_stack, parse_stack
from .tiler import Tile, TilingConfig, generate_tiles

__version__ = "0.1.0"

__all__ = [
    "ChipThermError", "GeometryError", "InputError", "LayoutError", "NumericalError",
    "SingularSystemError", "StackError", "DisjointPolygonSet", "Polygon", "Rect", "SpatialIndex",
    "merge_shapes", "RefineConfig", "ThermalGrid", "build_nonuniform_grid", "build_uniform_grid",
    "refine_loop", "load_layout", "parse_gdsii_subset", "parse_polygon_json", "Material",
    "effective_material", "SparseSystem", "assemble", "analytic_slab", "dense_solve", "rmse",
    "PowerSignal", "TemperatureField", "TransientConfig", "power_signal", "run_transient",
    "solve_steady", "step_transient", "FloorplanElement", "Layer", "Sink", "StackDescription",
    "adaptive_divide", "validate_stack", "load_stack", "parse_stack", "Tile", "TilingConfig",
    "generate_tiles",
]

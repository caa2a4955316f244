import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, strategies as st

import frozen
from chiptherm.errors import InputError
from chiptherm.geometry import Rect
from chiptherm.grid import Cell, build_grid, build_nonuniform_grid, build_uniform_grid
from chiptherm.materials import CHIP, HEATSINK, Material
from chiptherm.network import (assemble, cell_capacitance, check_invariants, face_conductance,
                               map_power, sink_conductance)
from chiptherm.solver import solve_steady
from chiptherm.stack import FloorplanElement, Layer, Sink, StackDescription
from helpers import MM, random_stack, single_die, slab


def cell(x0, x1, k, dz=1e-6):
    m = Material("m", k, k, 1.0, 1.0)
    return Cell(0, 0, 0, x0, 0.0, x1, 1e-6, dz, m)


def test_face_conductance_examples():
    a, b = cell(0, 2e-6, 1.0), cell(2e-6, 4e-6, 3.0)
    assert face_conductance(a, b, 1e-12, 0) == pytest.approx(frozen.G_SERIES_EXAMPLE, rel=1e-14)
    k, d, A = 130.0, 5e-6, 3e-12
    same = face_conductance(cell(0, d, k), cell(d, 2 * d, k), A, 0)
    assert same == pytest.approx(k * A / d, rel=1e-14)


def test_capacitance_of_heatsink_cube():
    c = Cell(0, 0, 0, 0.0, 0.0, 1e-3, 1e-3, 1e-3, HEATSINK)
    assert cell_capacitance(c) == pytest.approx(frozen.C_HEATSINK_MM3, rel=1e-14)


def test_map_power_equal_cells():
    stack, _ = single_die(1, 1, side=2 * MM)
    grid = build_uniform_grid(stack, 2, 2)
    assert list(map_power({"b0_0": 10.0}, grid)) == [2.5] * 4


def test_map_power_area_weighted():
    fp = Rect(0, 0, 4 * MM, MM)
    s = StackDescription([Layer("d", 1e-4, (FloorplanElement("p", fp, CHIP, "p"),), True)], fp,
                         Sink(1e4, 300))
    grid = build_grid(s, {(0, 0): (np.array([0, MM, 4 * MM]), np.array([0, MM]))})
    assert map_power({"p": 10.0}, grid) == pytest.approx([2.5, 7.5], rel=1e-15)


def test_zero_power_element():
    stack, _ = single_die(2, 1)
    assert not map_power({"b0_0": 0.0}, build_uniform_grid(stack, 4, 4)).any()


def test_power_errors():
    stack, _ = single_die(1, 1)
    grid = build_uniform_grid(stack, 2, 2)
    with pytest.raises(InputError, match="carries power id 'nope'"):
        map_power({"nope": 1.0}, grid)
    with pytest.raises(InputError, match="non-negative"):
        map_power({"b0_0": -1.0}, grid)


def test_single_cell_system():
    stack, powers = single_die(1, 1, side=MM, thickness=1e-4, powers={"b0_0": 2.0}, h=1e4)
    sys = assemble(build_uniform_grid(stack, 1, 1), stack.sink, powers)
    A = 1e-6
    gs = sink_conductance(1e4, A, 1e-4, 130.0)
    assert sys.G.toarray()[0, 0] == pytest.approx(gs, rel=1e-15)
    assert sys.P == pytest.approx([2.0 + gs * 300.0], rel=1e-15)
    T = solve_steady(sys).values[0]
    assert T == pytest.approx(300 + 2.0 / gs, rel=1e-14)
    # the half-cell term is small for a thin die, so T is close to T_amb + Q / (h A)
    assert gs == pytest.approx(1e4 * A, rel=5e-3)


def test_two_cell_column():
    s = slab(n_layers=2, thickness=2e-4, side=MM)
    sys = assemble(build_uniform_grid(s, 1, 1), s.sink, {"q": 1.0})
    G = sys.G.toarray()
    gab = 1e-6 / (1e-4 / 130)
    assert G[0, 1] == G[1, 0] == pytest.approx(-gab, rel=1e-14)
    assert G[0, 0] == pytest.approx(gab, rel=1e-14)
    assert G[1, 1] == pytest.approx(gab + sys.sink_g[1], rel=1e-14)


def test_nonconforming_neighbours_share_a_face():
    stack, powers = single_die(2, 1, side=2 * MM)
    grid = build_nonuniform_grid(stack, {(0, 0): (1e-3, 2e-3), (0, 1): (1e-3, 1e-3)})
    sys = assemble(grid, stack.sink, powers)
    check_invariants(sys)
    G = sys.G.toarray()
    assert G[0, 1] == pytest.approx(G[0, 2]) and G[0, 1] < 0


def test_bottom_sink():
    s = slab(n_layers=3, face="bottom", side=MM)
    sys = assemble(build_uniform_grid(s, 1, 1), s.sink, {"q": 1.0})
    assert sys.sink_g[0] > 0 and sys.sink_g[1:].sum() == 0


@given(st.integers(0, 2**32 - 1), st.integers(1, 6), st.integers(1, 6))
def test_system_invariants(seed, nx, ny):
    stack, powers = random_stack(np.random.default_rng(seed))
    sys = assemble(build_uniform_grid(stack, nx, ny), stack.sink, powers)
    check_invariants(sys)
    # positive definite: Cholesky of the dense matrix succeeds
    np.linalg.cholesky(sys.G.toarray())


@given(st.integers(0, 2**32 - 1), st.integers(2, 8))
def test_workers_give_identical_matrices(seed, workers):
    stack, powers = random_stack(np.random.default_rng(seed))
    grid = build_uniform_grid(stack, 5, 4)
    a = assemble(grid, stack.sink, powers, workers=1)
    b = assemble(grid, stack.sink, powers, workers=workers)
    assert (a.G != b.G).nnz == 0
    assert np.array_equal(a.G.indices, b.G.indices) and np.array_equal(a.G.indptr, b.G.indptr)
    assert np.array_equal(a.P, b.P) and np.array_equal(a.C, b.C)


@given(st.integers(0, 2**32 - 1))
def test_energy_balance(seed):
    stack, powers = random_stack(np.random.default_rng(seed))
    sys = assemble(build_uniform_grid(stack, 6, 6), stack.sink, powers)
    T = solve_steady(sys).values
    out = float(np.sum(sys.sink_g * (T - sys.ambient)))
    q = sum(powers.values())
    assert out == pytest.approx(q, rel=1e-6, abs=1e-12)


def test_coo_dump_round_trips():
    s = slab(n_layers=3, side=MM)
    sys = assemble(build_uniform_grid(s, 2, 2), s.sink, {"q": 1.0})
    rows = [line.split() for line in sys.dump_coo().splitlines()]
    M = sp.coo_matrix(([float(v) for _, _, v in rows], ([int(r) for r, _, _ in rows], [int(c) for _, c, _ in rows])),
                      shape=sys.G.shape)
    assert (M.tocsr() != sys.G).nnz == 0

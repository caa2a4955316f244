import pytest
from hypothesis import given, strategies as st

from chiptherm.errors import InputError
from chiptherm.geometry import Rect, build_spatial_index, merge_shapes, overlap_area
from chiptherm.materials import MICROBUMP, UNDERFILL
from chiptherm.tiler import (TilingConfig, generate_tiles, region_coverage, split_quad, subdivide,
                             tiles_csv, tiles_to_floorplan)


def index_of(*rects):
    return build_spatial_index(merge_shapes([Rect(*r) for r in rects]))


EMPTY = build_spatial_index(merge_shapes([]))


def test_fully_covered_window_is_one_tile():
    for cfg in (TilingConfig(), TilingConfig(i_max=0), TilingConfig(i_max=9, rho_lo=0.3, rho_hi=0.4)):
        tiles = generate_tiles(index_of((-5, -5, 200, 200)), Rect(0, 0, 100, 100), cfg)
        assert len(tiles) == 1 and tiles[0].rho == 1.0 and tiles[0].depth == 0


def test_empty_layer_is_one_tile():
    tiles = generate_tiles(EMPTY, Rect(0, 0, 64, 64), TilingConfig())
    assert len(tiles) == 1 and tiles[0].rho == 0.0 and tiles[0].depth == 0


def test_half_covered_square_one_level():
    tiles = generate_tiles(index_of((0, 0, 50, 100)), Rect(0, 0, 100, 100), TilingConfig(i_max=1))
    assert len(tiles) == 4
    assert sorted(t.rho for t in tiles) == [0.0, 0.0, 1.0, 1.0]
    assert all(t.depth == 1 for t in tiles)


def test_split_quad_examples():
    assert split_quad(Rect(0, 0, 10, 10)) == (Rect(0, 0, 5, 5), Rect(5, 0, 10, 5),
                                              Rect(0, 5, 5, 10), Rect(5, 5, 10, 10))
    assert split_quad(Rect(0, 0, 3, 3)) == (Rect(0, 0, 1, 1), Rect(1, 0, 3, 1),
                                            Rect(0, 1, 1, 3), Rect(1, 1, 3, 3))
    with pytest.raises(InputError):
        split_quad(Rect(0, 0, 1, 5))


@given(st.integers(-50, 50), st.integers(-50, 50), st.integers(2, 80), st.integers(2, 80))
def test_split_quad_is_exact_cover(x, y, w, h):
    r = Rect(x, y, x + w, y + h)
    qs = split_quad(r)
    assert sum(q.area for q in qs) == r.area
    for i in range(4):
        for j in range(i + 1, 4):
            assert qs[i].overlap(qs[j]) == 0


def test_subdivide_depth_cap_and_pure_regions():
    idx = index_of((0, 0, 50, 100))
    cfg = TilingConfig(i_max=3)
    got = subdivide(idx, Rect(0, 0, 100, 100), 3, cfg)
    assert len(got) == 1 and got[0].rho == 0.5
    got = subdivide(idx, Rect(60, 0, 100, 100), 0, cfg)
    assert len(got) == 1 and got[0].rho == 0.0


def test_subdivide_mixed_region_has_four_children():
    idx = index_of((0, 0, 30, 30))
    tiles = subdivide(idx, Rect(0, 0, 100, 100), 0, TilingConfig(i_max=1))
    assert [t.region for t in tiles] == list(split_quad(Rect(0, 0, 100, 100)))


def test_unsplittable_region_is_a_leaf():
    tiles = subdivide(index_of((0, 0, 1, 1)), Rect(0, 0, 1, 3), 0, TilingConfig(i_max=5))
    assert len(tiles) == 1


def test_tiles_csv_units():
    tiles = generate_tiles(EMPTY, Rect(0, 0, 1500, 2500), TilingConfig())
    assert tiles_csv(tiles) == "x0,y0,x1,y1,rho\n0.000,0.000,1.500,2.500,0.000000\n"


def test_tiles_to_floorplan_examples():
    one = generate_tiles(index_of((0, 0, 10, 10)), Rect(0, 0, 10, 10), TilingConfig())
    (e,) = tiles_to_floorplan(one, MICROBUMP, UNDERFILL)
    assert e.material == MICROBUMP and e.rect == Rect(0, 0, 10, 10)
    four = generate_tiles(index_of((0, 0, 50, 100)), Rect(0, 0, 100, 100), TilingConfig(i_max=1))
    elems = tiles_to_floorplan(four, MICROBUMP, UNDERFILL)
    assert [x.material for x in elems].count(MICROBUMP) == 2
    assert [x.material for x in elems].count(UNDERFILL) == 2
    assert [x.rect for x in elems] == [t.region for t in four]


boxes = st.tuples(st.integers(-20, 120), st.integers(-20, 120), st.integers(1, 60), st.integers(1, 60)).map(
    lambda t: Rect(t[0], t[1], t[0] + t[2], t[1] + t[3]))
configs = st.builds(lambda i, lo, gap: TilingConfig(i, lo, min(1.0, lo + gap)),
                    st.integers(0, 6), st.sampled_from([0.0, 0.02, 0.1, 0.3]),
                    st.sampled_from([0.05, 0.5, 0.96, 1.0]))
windows = st.tuples(st.integers(0, 10), st.integers(0, 10), st.integers(1, 120), st.integers(1, 120)).map(
    lambda t: Rect(t[0], t[1], t[0] + t[2], t[1] + t[3]))


@given(st.lists(boxes, max_size=6), windows, configs)
def test_partition_exactness(shapes, window, cfg):
    polys = merge_shapes(shapes)
    tiles = generate_tiles(build_spatial_index(polys), window, cfg)
    assert sum(t.region.area for t in tiles) == window.area
    assert sum(t.covered for t in tiles) == overlap_area(window, polys)
    for t in tiles:
        assert window.contains(t.region)
        stopped = cfg.satisfied(t.covered, t.region.area)
        assert stopped or t.depth == cfg.i_max or t.region.width < 2 or t.region.height < 2


@given(st.lists(boxes, min_size=1, max_size=6), windows, configs)
def test_more_depth_keeps_partition(shapes, window, cfg):
    polys = merge_shapes(shapes)
    idx = build_spatial_index(polys)
    target = overlap_area(window, polys)
    for i in range(4):
        c = TilingConfig(cfg.i_max + i, cfg.rho_lo, cfg.rho_hi)
        tiles = generate_tiles(idx, window, c)
        assert sum(t.region.area for t in tiles) == window.area
        assert sum(t.covered for t in tiles) == target
    # deeper trees never have fewer tiles
    counts = [len(generate_tiles(idx, window, TilingConfig(cfg.i_max + i, cfg.rho_lo, cfg.rho_hi)))
              for i in range(3)]
    assert counts == sorted(counts)


@given(st.lists(boxes, min_size=1, max_size=6), windows)
def test_tile_rho_is_the_mean_of_its_children(shapes, window):
    idx = build_spatial_index(merge_shapes(shapes))
    for t in generate_tiles(idx, window, TilingConfig(i_max=3)):
        if t.region.width < 2 or t.region.height < 2:
            continue
        kids = split_quad(t.region)
        mean = sum(region_coverage(idx, q) for q in kids) / t.region.area
        assert mean == t.covered / t.region.area


@given(st.lists(boxes, max_size=6), windows, st.integers(2, 4))
def test_workers_do_not_change_tiles(shapes, window, workers):
    idx = build_spatial_index(merge_shapes(shapes))
    cfg = TilingConfig(i_max=4)
    assert generate_tiles(idx, window, cfg, workers=workers) == generate_tiles(idx, window, cfg)

"""Small stack builders shared by the tests."""

import numpy as np

from chiptherm.geometry import Rect
from chiptherm.materials import CHIP, Material
from chiptherm.stack import FloorplanElement, Layer, Sink, StackDescription

UM = 1000
MM = 1_000_000


def slab(n_layers=20, thickness=1e-3, k=130.0, side=10 * MM, h=1e4, ambient=300.0, face="top"):
    """Laterally uniform column; the bottom layer carries power id 'q'."""
    mat = Material("slab", k, k, 2300, 700)
    fp = Rect(0, 0, side, side)
    layers = []
    for j in range(n_layers):
        pid = "q" if j == 0 else None
        layers.append(Layer(f"s{j}", thickness / n_layers, (FloorplanElement(f"e{j}", fp, mat, pid),),
                            is_source=(j == 0)))
    return StackDescription(layers, fp, Sink(h, ambient, face))


def single_die(nx=2, ny=2, side=2 * MM, thickness=100e-6, powers=None, h=1e4, material=CHIP):
    """One source layer cut into nx x ny equal blocks named b{i}_{j}."""
    w, hgt = side // nx, side // ny
    elems = [FloorplanElement(f"b{i}_{j}", Rect(i * w, j * hgt, (i + 1) * w, (j + 1) * hgt), material,
                              f"b{i}_{j}")
             for j in range(ny) for i in range(nx)]
    stack = StackDescription([Layer("die", thickness, elems, True)], Rect(0, 0, nx * w, ny * hgt),
                             Sink(h, 300.0))
    if powers is None:
        powers = {e.power_id: 1.0 for e in elems}
    return stack, powers


def random_stack(rng: np.random.Generator, max_layers=3, max_split=3):
    """Random guillotine floorplans with random anisotropic materials and powers."""
    side = int(rng.integers(1, 5)) * MM
    fp = Rect(0, 0, side, side)
    layers = []
    powers = {}
    n_layers = int(rng.integers(1, max_layers + 1))
    src = int(rng.integers(0, n_layers))
    for j in range(n_layers):
        cuts_x = sorted(set(int(c) for c in rng.integers(1, side // UM, size=int(rng.integers(0, max_split)))))
        cuts_y = sorted(set(int(c) for c in rng.integers(1, side // UM, size=int(rng.integers(0, max_split)))))
        xs = [0] + [c * UM for c in cuts_x] + [side]
        ys = [0] + [c * UM for c in cuts_y] + [side]
        elems = []
        for a in range(len(xs) - 1):
            for b in range(len(ys) - 1):
                kin = float(rng.uniform(1, 400))
                kv = float(rng.uniform(1, 400))
                mat = Material(f"m{j}{a}{b}", kin, kv, float(rng.uniform(1000, 9000)),
                               float(rng.uniform(200, 1200)))
                pid = f"p{j}_{a}_{b}" if j == src else None
                if pid:
                    powers[pid] = float(rng.uniform(0, 5))
                elems.append(FloorplanElement(f"e{j}_{a}_{b}", Rect(xs[a], ys[b], xs[a + 1], ys[b + 1]),
                                              mat, pid))
        layers.append(Layer(f"l{j}", float(rng.uniform(20e-6, 500e-6)), elems, j == src))
    face = "top" if rng.random() < 0.7 else "bottom"
    return StackDescription(layers, fp, Sink(float(rng.uniform(1e3, 1e5)), 300.0, face)), powers

"""Thermal materials and effective-medium mixing rules."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

from .errors import InputError


@dataclass(frozen=True)
class Material:
    """Thermal properties, possibly anisotropic (in-plane vs vertical).

    Units: conductivities W/(m K), density kg/m^3, heat capacity J/(kg K).
    """

    name: str
    k_inplane: float
    k_vertical: float
    density: float
    heat_capacity: float

    def __post_init__(self):
        for attr in ("k_inplane", "k_vertical", "density", "heat_capacity"):
            v = getattr(self, attr)
            if not v > 0:
                raise InputError(f"material {self.name!r}: {attr} must be positive, got {v}")

    @classmethod
    def isotropic(cls, name, k, density, heat_capacity):
        return cls(name, k, k, density, heat_capacity)

    @property
    def is_isotropic(self) -> bool:
        return self.k_inplane == self.k_vertical

    @property
    def volumetric_heat_capacity(self) -> float:
        return self.density * self.heat_capacity


# Anisotropic tile materials share the same shape.
EffectiveMaterial = Material


def mix_parallel_series(fractions: Sequence[float], materials: Sequence[Material], name: str) -> Material:
    """Default mixing: arithmetic vertical, harmonic in-plane.

    Density is volume-weighted; heat capacity is mass-weighted so that the
    volumetric heat capacity of the mix equals the volume-weighted one.
    """
    if len(fractions) != len(materials):
        raise ValueError("fractions and materials differ in length")
    total = sum(fractions)
    if abs(total - 1.0) > 1e-9:
        raise InputError(f"volume fractions sum to {total}, expected 1")
    pairs = [(f, m) for f, m in zip(fractions, materials) if f > 0]
    if len(pairs) == 1:
        m = pairs[0][1]
        return Material(name, m.k_inplane, m.k_vertical, m.density, m.heat_capacity)
    k_v = sum(f * m.k_vertical for f, m in pairs)
    k_in = 1.0 / sum(f / m.k_inplane for f, m in pairs)
    rho = sum(f * m.density for f, m in pairs)
    rc = sum(f * m.density * m.heat_capacity for f, m in pairs)
    return Material(name, k_in, k_v, rho, rc / rho)


MixingRule = Callable[[Sequence[float], Sequence[Material], str], Material]


def effective_material(rho: float, feature: Material, fill: Material,
                       rule: MixingRule = mix_parallel_series) -> Material:
    """Equivalent material of a tile whose area fraction ``rho`` is ``feature``."""
    if not 0.0 <= rho <= 1.0:
        raise InputError(f"overlap ratio must lie in [0, 1], got {rho}")
    if rho == 0.0:
        return fill
    if rho == 1.0:
        return feature
    return rule([rho, 1.0 - rho], [feature, fill], f"{feature.name}/{fill.name}@{rho:.6g}")


# Component properties used by the demo stacks.
HEATSINK = Material.isotropic("heatsink", 385.0, 8900.0, 387.0)
TIM = Material.isotropic("tim", 5.0, 2500.0, 1000.0)
CHIP = Material.isotropic("chip", 130.0, 2300.0, 700.0)
PCB = Material.isotropic("pcb", 130.0, 2300.0, 700.0)
MICROBUMP = Material("microbump", 5.5, 113.0, 7380.0, 250.0)
C4_BUMP = Material("c4bump", 5.5, 113.0, 7380.0, 250.0)
UNDERFILL = Material.isotropic("underfill", 1.5, 1400.0, 1100.0)

PACKAGE_MATERIALS = {m.name: m for m in (HEATSINK, TIM, CHIP, PCB, MICROBUMP, C4_BUMP, UNDERFILL)}

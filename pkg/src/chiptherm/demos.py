"""Bundled example stacks."""

from __future__ import annotations

from importlib import resources
from pathlib import Path

from .stackfile import StackFile, load_stack

_DIR = resources.files(__package__) / "demos"

PACKAGE_STACK = "package_stack.txt"
HOTSPOT_DIE = "hotspot_die.txt"
PACKAGE_SIGNALS = "package_signals.txt"


def demo_path(name: str) -> Path:
    return Path(str(_DIR / name))


def package_stack() -> StackFile:
    """Five-layer PCB/microbump/chip/TIM/heatsink package, 10 x 10 mm."""
    return load_stack(demo_path(PACKAGE_STACK))


def hotspot_die() -> StackFile:
    """8 x 6 mm single die with one 8 W block among 0.2 W blocks."""
    return load_stack(demo_path(HOTSPOT_DIE))

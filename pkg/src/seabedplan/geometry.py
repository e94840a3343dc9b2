"""Planar pose type and angle helpers."""

from __future__ import annotations

import math
from typing import NamedTuple

import numpy as np

TWO_PI = 2.0 * math.pi


def wrap_angle(a: float) -> float:
    """Map an angle to (-pi, pi]."""
    a = math.remainder(a, TWO_PI)
    if a <= -math.pi:
        a += TWO_PI
    return a


def wrap_angles(a: np.ndarray) -> np.ndarray:
    out = np.remainder(np.asarray(a, dtype=float) + math.pi, TWO_PI) - math.pi
    out[out <= -math.pi] += TWO_PI
    return out


class Pose2(NamedTuple):
    """Planar pose; heading in radians, measured from +x toward +y."""

    x: float
    y: float
    psi: float = 0.0

    @classmethod
    def make(cls, x: float, y: float, psi: float = 0.0) -> "Pose2":
        return cls(float(x), float(y), wrap_angle(float(psi)))

    @property
    def xy(self) -> tuple[float, float]:
        return (self.x, self.y)

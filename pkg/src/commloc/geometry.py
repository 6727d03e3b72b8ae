"""Planar frames and relative-pose conversions.

Body frames are planar with x forward and y to the left of x (angles grow
counterclockwise when viewed from above). A negative angle increment is a
clockwise, right-hand turn. Heights are kept as a separate scalar channel.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np


class PlanarVec(NamedTuple):
    x: float
    y: float

    def norm(self) -> float:
        return math.hypot(self.x, self.y)


@dataclass(frozen=True)
class RelativePose:
    """Range, bearing, relative height and relative yaw of a neighbor."""

    rho: float
    beta: float
    z_rel: float
    psi_rel: float

    def __post_init__(self):
        if not self.rho >= 0.0:
            raise ValueError(f"rho must be >= 0, got {self.rho}")
        object.__setattr__(self, "beta", wrap_angle(self.beta))
        object.__setattr__(self, "psi_rel", wrap_angle(self.psi_rel))


def wrap_angle(a: float) -> float:
    """Wrap an angle to (-pi, pi]."""
    if not math.isfinite(a):
        raise ValueError(f"cannot wrap non-finite angle {a!r}")
    w = math.remainder(a, 2.0 * math.pi)
    # remainder maps odd multiples of pi to -pi half of the time
    if w <= -math.pi:
        w += 2.0 * math.pi
    return w


def wrap_angles(a):
    """Vectorised `wrap_angle` for numpy arrays (no finiteness check)."""
    w = np.remainder(np.asarray(a, dtype=float) + np.pi, 2.0 * np.pi) - np.pi
    return np.where(w <= -np.pi, w + 2.0 * np.pi, w)


def to_polar(p, z_rel: float = 0.0) -> tuple[float, float]:
    """Range and planar bearing of a relative position.

    The range includes the height offset; the bearing is the planar angle
    only. ``atan2(0, 0)`` is taken as 0 so zero-range poses do not raise.
    """
    x, y = float(p[0]), float(p[1])
    rho = math.sqrt(x * x + y * y + z_rel * z_rel)
    beta = math.atan2(y, x) if (x or y) else 0.0
    return rho, wrap_angle(beta)


def from_polar(rho: float, beta: float) -> PlanarVec:
    return PlanarVec(rho * math.cos(beta), rho * math.sin(beta))


def rotate2d(v, angle: float) -> PlanarVec:
    """Rotate ``v`` counterclockwise by ``angle``."""
    c, s = math.cos(angle), math.sin(angle)
    x, y = float(v[0]), float(v[1])
    return PlanarVec(c * x - s * y, s * x + c * y)


def rotate2d_batch(v, angle):
    """Rotate stacked vectors ``v[..., 2]`` by broadcastable ``angle``."""
    v = np.asarray(v, dtype=float)
    c, s = np.cos(angle), np.sin(angle)
    x, y = v[..., 0], v[..., 1]
    return np.stack((c * x - s * y, s * x + c * y), axis=-1)

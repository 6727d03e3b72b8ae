"""Collision cones in velocity space and the clockwise escape search.

A cone holds every own velocity that could lead towards a neighbor: its axis
points along the estimated bearing, its opening shrinks with the estimated
range, and its apex sits at the neighbor's estimated velocity. The escape
search turns the desired velocity clockwise (negative angle increments)
until it leaves every cone, and speeds up after each failed revolution.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np

from .geometry import PlanarVec, to_polar


class InvalidTuningError(ValueError):
    pass


@dataclass(frozen=True)
class ConeParams:
    r: float = 0.25
    kappa_alpha: float = 1.0
    epsilon_alpha: float = 0.5
    max_expansion: float = math.pi - 0.01

    def __post_init__(self):
        if not self.r > 0:
            raise ValueError("MAV radius r must be > 0")
        if not self.kappa_alpha >= 1.0:
            raise ValueError("kappa_alpha must be >= 1")
        if self.epsilon_alpha < -2.0 * self.r:
            raise ValueError(
                f"epsilon_alpha={self.epsilon_alpha} below -2r={-2.0 * self.r}"
            )
        if not 0 < self.max_expansion < math.pi:
            raise ValueError("max_expansion must lie in (0, pi)")

    @property
    def asymptote(self) -> float:
        return asymptote_angle(self.kappa_alpha)


@dataclass(frozen=True)
class SearchConfig:
    step: float = 0.1
    speed_factor: float = 1.5
    max_speed: float = 1.0

    def __post_init__(self):
        if not 0 < self.step <= math.pi:
            raise ValueError("search step must lie in (0, pi]")
        if not self.speed_factor > 1.0:
            raise ValueError("speed_factor must be > 1")
        if not self.max_speed > 0:
            raise ValueError("max_speed must be > 0")

    @property
    def n_angles(self) -> int:
        return int(math.ceil(2.0 * math.pi / self.step - 1e-9))

    def speeds(self, start: float) -> list[float]:
        out = [start]
        while out[-1] < self.max_speed - 1e-12:
            out.append(min(out[-1] * self.speed_factor, self.max_speed))
        return out


@dataclass(frozen=True)
class Cone:
    apex: PlanarVec
    axis_bearing: float
    half_angle: float
    clamped: bool = False


@dataclass(frozen=True)
class ConeSet:
    cones: tuple[Cone, ...] = ()

    def __len__(self):
        return len(self.cones)

    def __iter__(self):
        return iter(self.cones)


class EscapeResult(NamedTuple):
    velocity: PlanarVec
    exhausted: bool


def asymptote_angle(kappa_alpha: float) -> float:
    """Opening angle of a cone towards a very distant neighbor."""
    return 2.0 * math.atan(1.0 / kappa_alpha)


def expansion_angle(rho_est, params: ConeParams):
    """Full opening angle of the cone for an estimated range (scalar or array)."""
    rho = np.asarray(rho_est, dtype=float)
    if np.any(~(rho > 0)):
        raise ValueError("expansion_angle needs rho_est > 0")
    alpha = 2.0 * np.arctan(
        (2.0 * params.r + rho + params.epsilon_alpha) / (params.kappa_alpha * rho)
    )
    alpha = np.clip(alpha, np.nextafter(0.0, 1.0), params.max_expansion)
    return float(alpha) if alpha.ndim == 0 else alpha


def epsilon_from_pair(rho_eq: float, alpha_eq: float, r: float, kappa_alpha: float = 1.0) -> float:
    """Margin that gives opening ``alpha_eq`` at range ``rho_eq``."""
    if not alpha_eq > asymptote_angle(kappa_alpha):
        raise InvalidTuningError(
            f"alpha_eq={alpha_eq} must exceed the asymptote {asymptote_angle(kappa_alpha)}"
        )
    if not alpha_eq < math.pi:
        raise InvalidTuningError("alpha_eq must be below pi")
    if not rho_eq > 0:
        raise InvalidTuningError("rho_eq must be > 0")
    return kappa_alpha * rho_eq * math.tan(alpha_eq / 2.0) - 2.0 * r - rho_eq


def build_cone(p_ji, v_jRi, params: ConeParams, z_rel: float = 0.0, min_range: float = 0.01) -> Cone:
    """Cone from an estimated relative position and neighbor velocity."""
    rho, beta = to_polar(p_ji, z_rel)
    clamped = rho < min_range
    alpha = expansion_angle(max(rho, min_range), params)
    return Cone(PlanarVec(float(v_jRi[0]), float(v_jRi[1])), beta, alpha / 2.0, clamped)


def build_cone_from_state(state, params: ConeParams) -> Cone:
    return build_cone(state.p_ji, state.v_jRi, params, z_rel=state.z_j - state.z_i)


def in_cone(v, cone: Cone) -> bool:
    dx = float(v[0]) - cone.apex[0]
    dy = float(v[1]) - cone.apex[1]
    if dx == 0.0 and dy == 0.0:
        return True
    ux, uy = math.cos(cone.axis_bearing), math.sin(cone.axis_bearing)
    ang = abs(math.atan2(ux * dy - uy * dx, ux * dx + uy * dy))
    return ang <= cone.half_angle


def in_cone_set(v, cones: ConeSet | Sequence[Cone]) -> bool:
    return any(in_cone(v, c) for c in cones)


def in_cones_batch(v, apex, axis, half, valid=None):
    """Membership of velocities ``v[..., 2]`` in cones broadcast against them.

    ``apex[..., 2]``, ``axis[...]`` and ``half[...]`` describe the cones;
    returns a boolean array over the broadcast shape.
    """
    d = np.asarray(v)[..., :] - np.asarray(apex)
    dx, dy = d[..., 0], d[..., 1]
    ux, uy = np.cos(axis), np.sin(axis)
    ang = np.abs(np.arctan2(ux * dy - uy * dx, ux * dx + uy * dy))
    inside = (ang <= half) | ((dx == 0.0) & (dy == 0.0))
    if valid is not None:
        inside &= valid
    return inside


def candidate_offsets(search: SearchConfig) -> np.ndarray:
    """Clockwise rotation offsets tried in order: 0, -step, -2*step, ..."""
    return -search.step * np.arange(search.n_angles)


def escape_search(desired_v, cones: ConeSet | Sequence[Cone], search: SearchConfig) -> EscapeResult:
    """First clockwise candidate outside every cone, or hover when none exists."""
    speed0 = math.hypot(float(desired_v[0]), float(desired_v[1]))
    if not speed0 > 0:
        raise ValueError("escape_search needs a non-zero desired velocity")
    cones = list(cones)
    if not cones:
        return EscapeResult(PlanarVec(float(desired_v[0]), float(desired_v[1])), False)
    heading = math.atan2(desired_v[1], desired_v[0])
    for speed in search.speeds(speed0):
        for off in candidate_offsets(search):
            cand = PlanarVec(speed * math.cos(heading + off), speed * math.sin(heading + off))
            if not in_cone_set(cand, cones):
                return EscapeResult(cand, False)
    return EscapeResult(PlanarVec(0.0, 0.0), True)


def escape_search_batch(desired, apex, axis, half, valid, search: SearchConfig, v_nominal: float):
    """Vectorised escape search over a batch of agents.

    ``desired`` is ``(B, 2)`` with speed ``v_nominal``; cone arrays are
    ``(B, C, ...)``. Returns ``(velocity (B, 2), exhausted (B,))``.
    """
    desired = np.asarray(desired, dtype=float)
    heading = np.arctan2(desired[:, 1], desired[:, 0])
    speeds = np.asarray(search.speeds(v_nominal))
    offs = candidate_offsets(search)
    ang = heading[:, None] + offs[None, :]                                   # (B, K)
    unit = np.stack((np.cos(ang), np.sin(ang)), axis=-1)                    # (B, K, 2)
    cand = speeds[None, :, None, None] * unit[:, None, :, :]                 # (B, S, K, 2)
    cand = cand.reshape(len(desired), -1, 2)                                 # (B, S*K, 2)
    blocked = in_cones_batch(
        cand[:, :, None, :], apex[:, None, :, :], axis[:, None, :], half[:, None, :], valid[:, None, :]
    ).any(axis=-1)
    free = ~blocked
    first = np.argmax(free, axis=1)
    exhausted = ~free.any(axis=1)
    out = cand[np.arange(len(desired)), first]
    out[exhausted] = 0.0
    return out, exhausted

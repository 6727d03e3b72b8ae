"""Extended Kalman filter for the relative position of one neighbor.

The filter fuses a signal-strength reading with the velocity, yaw and height
that the neighbor broadcasts and the receiver's own on-board states.

State vector (10 entries)::

    0-1  p_ji   relative position of j in frame i
    2-3  v_i    own velocity, frame i
    4-5  v_jRi  neighbor velocity rotated into frame i
    6    psi_j
    7    psi_i
    8    z_j
    9    z_i

Observation vector (9 entries)::

    0    rssi        log-distance model of the 3D range
    1-2  v_i
    3-4  v_j         neighbor velocity in its own frame j
    5    psi_j
    6    psi_i
    7    z_j
    8    z_i

The ``*_batch`` kernels broadcast over any number of leading axes so the
simulator can step every filter of every trial at once. The single-filter
functions below them are thin wrappers.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .channel import ChannelParams
from .geometry import PlanarVec, RelativePose, to_polar, wrap_angle, wrap_angles

N_STATE = 10
N_OBS = 9
EPSILON_RANGE = 0.01
_LN10 = math.log(10.0)


@dataclass(frozen=True)
class MeasurementNoiseConfig:
    sigma_m: float = 5.0
    sigma_v: float = 0.2
    sigma_psi: float = 0.2
    sigma_z: float = 0.2

    def __post_init__(self):
        for k, v in vars(self).items():
            if not v >= 0:
                raise ValueError(f"{k} must be >= 0")

    def diag(self) -> np.ndarray:
        return np.array(
            [self.sigma_m] + [self.sigma_v] * 4 + [self.sigma_psi] * 2 + [self.sigma_z] * 2
        ) ** 2


@dataclass(frozen=True)
class ProcessNoiseConfig:
    sigma_qp: float = 0.1
    sigma_qv: float = 0.5
    sigma_qpsi: float = 0.5
    sigma_qz: float = 0.5

    def __post_init__(self):
        for k, v in vars(self).items():
            if not v >= 0:
                raise ValueError(f"{k} must be >= 0")

    def diag(self) -> np.ndarray:
        return np.array(
            [self.sigma_qp] * 2 + [self.sigma_qv] * 4 + [self.sigma_qpsi] * 2 + [self.sigma_qz] * 2
        ) ** 2


@dataclass(frozen=True)
class OwnMeasurement:
    v_i: PlanarVec
    psi_i: float
    z_i: float


@dataclass(frozen=True)
class NeighborMeasurement:
    rssi: float
    v_j_body: PlanarVec
    psi_j: float
    z_j: float

    def __post_init__(self):
        vals = (self.rssi, *self.v_j_body, self.psi_j, self.z_j)
        if not all(math.isfinite(v) for v in vals):
            raise ValueError("neighbor measurement fields must be finite")


# -- batched kernels ---------------------------------------------------------

def transition_jacobian(dt) -> np.ndarray:
    """Jacobian of the constant-velocity transition, shape ``dt.shape + (10, 10)``."""
    dt = np.asarray(dt, dtype=float)
    F = np.broadcast_to(np.eye(N_STATE), dt.shape + (N_STATE, N_STATE)).copy()
    F[..., 0, 2] = -dt
    F[..., 1, 3] = -dt
    F[..., 0, 4] = dt
    F[..., 1, 5] = dt
    return F


def predict_batch(x, P, dt, q_diag):
    """Propagate states ``x[..., 10]`` and covariances ``P[..., 10, 10]``."""
    dt = np.asarray(dt, dtype=float)
    x = np.array(x, dtype=float, copy=True)
    x[..., 0:2] += (x[..., 4:6] - x[..., 2:4]) * dt[..., None]
    F = transition_jacobian(dt)
    P = F @ P @ np.swapaxes(F, -1, -2) + np.diag(q_diag)
    return x, P


def observe_batch(x, p_n: float, gamma_l: float, eps: float = EPSILON_RANGE):
    """Predicted observation, its Jacobian and the range-clamp flag."""
    x = np.asarray(x, dtype=float)
    px, py = x[..., 0], x[..., 1]
    dz = x[..., 8] - x[..., 9]
    rho_raw = np.sqrt(px * px + py * py + dz * dz)
    clamped = rho_raw < eps
    rho = np.maximum(rho_raw, eps)

    h = np.empty(x.shape[:-1] + (N_OBS,))
    h[..., 0] = p_n - 10.0 * gamma_l * np.log10(rho)
    h[..., 1:3] = x[..., 2:4]
    psi_rel = x[..., 6] - x[..., 7]
    c, s = np.cos(psi_rel), np.sin(psi_rel)
    vx, vy = x[..., 4], x[..., 5]
    # frame i -> frame j, i.e. rotate by -psi_rel
    h[..., 3] = c * vx + s * vy
    h[..., 4] = -s * vx + c * vy
    h[..., 5:9] = x[..., 6:10]

    H = np.zeros(x.shape[:-1] + (N_OBS, N_STATE))
    dh_drho = -10.0 * gamma_l / (rho * _LN10)
    H[..., 0, 0] = dh_drho * px / rho
    H[..., 0, 1] = dh_drho * py / rho
    H[..., 0, 8] = dh_drho * dz / rho
    H[..., 0, 9] = -dh_drho * dz / rho
    H[..., 1, 2] = 1.0
    H[..., 2, 3] = 1.0
    H[..., 3, 4] = c
    H[..., 3, 5] = s
    H[..., 4, 4] = -s
    H[..., 4, 5] = c
    dvx = -s * vx + c * vy
    dvy = -c * vx - s * vy
    H[..., 3, 6] = dvx
    H[..., 3, 7] = -dvx
    H[..., 4, 6] = dvy
    H[..., 4, 7] = -dvy
    for k in range(4):
        H[..., 5 + k, 6 + k] = 1.0
    return h, H, clamped


def update_batch(x, P, z, r_diag, p_n: float, gamma_l: float, eps: float = EPSILON_RANGE):
    """Joseph-form measurement update. Returns ``(x, P, innovation, clamped)``."""
    h, H, clamped = observe_batch(x, p_n, gamma_l, eps)
    y = np.asarray(z, dtype=float) - h
    y[..., 5:7] = wrap_angles(y[..., 5:7])

    R = np.diag(r_diag)
    Ht = np.swapaxes(H, -1, -2)
    HP = H @ P
    S = HP @ Ht + R
    # K = P H^T S^-1 = (S^-1 H P)^T for symmetric P and S
    K = np.swapaxes(np.linalg.solve(S, HP), -1, -2)
    x = x + (K @ y[..., None])[..., 0]
    x[..., 6:8] = wrap_angles(x[..., 6:8])

    IKH = np.eye(N_STATE) - K @ H
    P = IKH @ P @ np.swapaxes(IKH, -1, -2) + K @ R @ np.swapaxes(K, -1, -2)
    P = 0.5 * (P + np.swapaxes(P, -1, -2))
    return x, P, y, clamped


def measurement_vector(rssi, v_i, psi_i, z_i, v_j_body, psi_j, z_j) -> np.ndarray:
    """Stack measurement pieces (scalars or arrays) into ``[..., 9]``."""
    v_i = np.asarray(v_i, dtype=float)
    v_j = np.asarray(v_j_body, dtype=float)
    parts = [
        np.asarray(rssi, dtype=float)[..., None],
        v_i,
        v_j,
        np.asarray(psi_j, dtype=float)[..., None],
        np.asarray(psi_i, dtype=float)[..., None],
        np.asarray(z_j, dtype=float)[..., None],
        np.asarray(z_i, dtype=float)[..., None],
    ]
    shape = np.broadcast_shapes(*(p.shape[:-1] for p in parts))
    return np.concatenate([np.broadcast_to(p, shape + p.shape[-1:]) for p in parts], axis=-1)


def initial_covariance(pos_sd: float, r: MeasurementNoiseConfig) -> np.ndarray:
    d = r.diag()
    return np.diag(np.concatenate(([pos_sd ** 2] * 2, d[1:])))


# -- single filter -----------------------------------------------------------

@dataclass
class FilterState:
    x: np.ndarray
    cov: np.ndarray
    innovation: np.ndarray | None = None
    range_clamped: bool = False

    @property
    def p_ji(self) -> PlanarVec:
        return PlanarVec(float(self.x[0]), float(self.x[1]))

    @property
    def v_i(self) -> PlanarVec:
        return PlanarVec(float(self.x[2]), float(self.x[3]))

    @property
    def v_jRi(self) -> PlanarVec:
        return PlanarVec(float(self.x[4]), float(self.x[5]))

    @property
    def psi_j(self) -> float:
        return float(self.x[6])

    @property
    def psi_i(self) -> float:
        return float(self.x[7])

    @property
    def z_j(self) -> float:
        return float(self.x[8])

    @property
    def z_i(self) -> float:
        return float(self.x[9])


def ekf_init(
    initial_guess,
    own_state: OwnMeasurement | None = None,
    neighbor_hint: NeighborMeasurement | None = None,
    initial_cov_scale: float = 1.0,
    r: MeasurementNoiseConfig | None = None,
) -> FilterState:
    """Start a filter at ``initial_guess``.

    ``initial_cov_scale`` is the position standard deviation in meters; the
    remaining diagonal entries come from the measurement noise SDs.
    """
    if not initial_cov_scale > 0:
        raise ValueError("initial_cov_scale must be > 0")
    r = r or MeasurementNoiseConfig()
    x = np.zeros(N_STATE)
    x[0:2] = initial_guess
    if own_state is not None:
        x[2:4] = own_state.v_i
        x[7] = own_state.psi_i
        x[9] = own_state.z_i
    if neighbor_hint is not None:
        x[6] = neighbor_hint.psi_j
        x[8] = neighbor_hint.z_j
        psi_rel = x[6] - x[7]
        c, s = math.cos(psi_rel), math.sin(psi_rel)
        vx, vy = neighbor_hint.v_j_body
        x[4:6] = (c * vx - s * vy, s * vx + c * vy)
    return FilterState(x=x, cov=initial_covariance(initial_cov_scale, r))


def ekf_predict(state: FilterState, dt: float, q: ProcessNoiseConfig) -> FilterState:
    if not dt > 0:
        raise ValueError("dt must be > 0")
    x, P = predict_batch(state.x, state.cov, dt, q.diag())
    return replace(state, x=x, cov=P, innovation=None, range_clamped=False)


def ekf_update(
    state: FilterState,
    own_meas: OwnMeasurement,
    neighbor_meas: NeighborMeasurement,
    r: MeasurementNoiseConfig,
    channel: ChannelParams,
) -> FilterState:
    z = measurement_vector(
        neighbor_meas.rssi, own_meas.v_i, own_meas.psi_i, own_meas.z_i,
        neighbor_meas.v_j_body, neighbor_meas.psi_j, neighbor_meas.z_j,
    )
    x, P, y, clamped = update_batch(state.x, state.cov, z, r.diag(), channel.p_n, channel.gamma_l)
    return replace(state, x=x, cov=P, innovation=y, range_clamped=bool(clamped))


def estimate_pose(state: FilterState) -> RelativePose:
    z_rel = state.z_j - state.z_i
    rho, beta = to_polar(state.p_ji, z_rel)
    return RelativePose(rho=rho, beta=beta, z_rel=z_rel, psi_rel=wrap_angle(state.psi_j - state.psi_i))


def predicted_observation(state: FilterState, channel: ChannelParams) -> np.ndarray:
    return observe_batch(state.x, channel.p_n, channel.gamma_l)[0]

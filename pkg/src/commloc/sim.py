"""Closed-loop world: kinematic agents in a square arena, slotted 5 Hz state
broadcast with simulated RSSI, per-neighbor filters and the wall/cone task
controller.

Many trials of one configuration run in lockstep inside ``run_batch``; every
trial draws its noise from its own seeded streams, so a trial's result does
not depend on which other trials share the batch.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import NamedTuple

import numpy as np

from . import estimator as ekf
from .avoidance import (
    ConeSet,
    SearchConfig,
    escape_search,
    escape_search_batch,
    expansion_angle,
    in_cone_set,
    in_cones_batch,
)
from .channel import ChannelParams, noisy_rssi, sample_rssi
from .config import Configuration, StateNoise, TaskConfig
from .estimator import NeighborMeasurement
from .geometry import PlanarVec, rotate2d, rotate2d_batch, wrap_angles

NONE, M1, M2 = 0, 1, 2
CONDITION_NAMES = {NONE: "none", M1: "M1", M2: "M2"}


@dataclass
class AgentState:
    pos: PlanarVec
    vel: PlanarVec = PlanarVec(0.0, 0.0)
    psi: float = 0.0
    z: float = 1.0
    cmd_vel: PlanarVec = PlanarVec(0.0, 0.0)
    desired: PlanarVec | None = None


@dataclass
class World:
    agents: list[AgentState]
    task: TaskConfig = field(default_factory=TaskConfig)
    time: float = 0.0


class CommSlot(NamedTuple):
    agent_id: int
    slot_index: int
    step_offset: int


class Command(NamedTuple):
    velocity: PlanarVec
    desired: PlanarVec
    condition: str
    exhausted: bool = False


def comm_schedule(team_size: int, steps_per_round: int) -> list[CommSlot]:
    """Round-robin slots by agent id, spread evenly over one round."""
    return [CommSlot(k, k, k * steps_per_round // team_size) for k in range(team_size)]


def corner_starts(team_size: int, side: float, inset: float) -> np.ndarray:
    """Distinct corners, inset from both walls; two agents start diagonally opposite."""
    lo, hi = inset, side - inset
    corners = [(lo, lo), (hi, hi), (hi, lo), (lo, hi)]
    return np.array(corners[:team_size], dtype=float)


# -- physics -----------------------------------------------------------------

def physics_step_batch(pos, vel, cmd, dt: float, tau: float, side: float | None = None):
    """First-order velocity tracking then explicit position integration.

    With ``side`` given the arena walls are solid: positions are clipped to
    ``[0, side]`` and the velocity component into a touched wall is zeroed.
    """
    vel = vel + (cmd - vel) * (dt / tau)
    pos = pos + vel * dt
    if side is not None:
        low = pos < 0.0
        high = pos > side
        if low.any() or high.any():
            pos = np.clip(pos, 0.0, side)
            vel = np.where((low & (vel < 0)) | (high & (vel > 0)), 0.0, vel)
    return pos, vel


def step_physics(agent: AgentState, dt: float, cfg: TaskConfig, walls: bool = True) -> AgentState:
    if not dt > 0:
        raise ValueError("dt must be > 0")
    pos, vel = physics_step_batch(
        np.asarray(agent.pos, float), np.asarray(agent.vel, float), np.asarray(agent.cmd_vel, float),
        dt, cfg.vel_time_constant, cfg.arena_side if walls else None,
    )
    return replace(agent, pos=PlanarVec(*map(float, pos)), vel=PlanarVec(*map(float, vel)))


# -- controller ----------------------------------------------------------------

def wall_condition_batch(pos, vel, side: float, d_safe: float):
    """M1: inside the safety band of a border and moving towards it."""
    x, y = pos[..., 0], pos[..., 1]
    vx, vy = vel[..., 0], vel[..., 1]
    return (
        ((x < d_safe) & (vx < 0))
        | ((side - x < d_safe) & (vx > 0))
        | ((y < d_safe) & (vy < 0))
        | ((side - y < d_safe) & (vy > 0))
    )


def toward_center(pos, side: float, speed: float):
    d = side / 2.0 - np.asarray(pos, dtype=float)
    n = np.linalg.norm(d, axis=-1, keepdims=True)
    n = np.where(n > 0, n, 1.0)
    return speed * d / n


def control_batch(pos, vel, desired, cmd, cones, task: TaskConfig, search: SearchConfig, avoidance: bool):
    """Task controller for a batch of agents.

    ``cones`` is ``(apex, axis, half, valid)`` with a neighbor axis of size
    ``m - 1``. Returns ``(cmd, desired, condition, exhausted)``; a command is
    only replaced under M1 or M2, otherwise the previous one is kept.
    """
    m1 = wall_condition_batch(pos, vel, task.arena_side, task.d_safe)
    cond = np.where(m1, M1, NONE)
    center = toward_center(pos, task.arena_side, task.v_nominal)
    desired = np.where(m1[:, None], center, desired)
    cmd = np.where(m1[:, None], center, cmd)
    exhausted = np.zeros(len(pos), dtype=bool)
    if avoidance:
        apex, axis, half, valid = cones
        m2 = ~m1 & in_cones_batch(vel[:, None, :], apex, axis, half, valid).any(axis=1)
        if m2.any():
            esc, exh = escape_search_batch(
                desired[m2], apex[m2], axis[m2], half[m2], valid[m2], search, task.v_nominal
            )
            cmd = cmd.copy()
            cmd[m2] = esc
            exhausted[m2] = exh
            cond = np.where(m2, M2, cond)
    return cmd, desired, cond, exhausted


def task_controller(
    agent: AgentState,
    cone_set: ConeSet,
    cfg: TaskConfig,
    search: SearchConfig | None = None,
    avoidance: bool = True,
) -> Command:
    """One controller decision for a single agent."""
    search = search or SearchConfig(max_speed=2.0 * cfg.v_nominal)
    pos = np.asarray(agent.pos, float)
    vel = np.asarray(agent.vel, float)
    desired = agent.desired if agent.desired is not None else agent.cmd_vel
    if wall_condition_batch(pos, vel, cfg.arena_side, cfg.d_safe):
        c = PlanarVec(*map(float, toward_center(pos, cfg.arena_side, cfg.v_nominal)))
        return Command(c, c, "M1")
    if avoidance and in_cone_set(agent.vel, cone_set):
        res = escape_search(desired, cone_set, search)
        return Command(res.velocity, PlanarVec(*desired), "M2", res.exhausted)
    return Command(PlanarVec(*agent.cmd_vel), PlanarVec(*desired), "none")


# -- collisions ----------------------------------------------------------------

def unordered_pairs(m: int) -> list[tuple[int, int]]:
    return [(i, j) for i in range(m) for j in range(i + 1, m)]


def collisions_batch(pos, r_c: float, pairs):
    """Collision flag and index of the first offending pair, per trial."""
    a = np.array([p[0] for p in pairs])
    b = np.array([p[1] for p in pairs])
    d = np.linalg.norm(pos[:, a, :] - pos[:, b, :], axis=-1)
    hit = d < 2.0 * r_c
    return hit.any(axis=1), np.argmax(hit, axis=1)


def detect_collision(world: World, r_c: float):
    """First pair closer than ``2 * r_c`` (strict), as ``((i, j), time)``."""
    for i, j in unordered_pairs(len(world.agents)):
        pi, pj = world.agents[i].pos, world.agents[j].pos
        if math.hypot(pi[0] - pj[0], pi[1] - pj[1]) < 2.0 * r_c:
            return (i, j), world.time
    return None


# -- communication -------------------------------------------------------------

def relative_geometry(pos_i, psi_i, z_i, pos_j, psi_j, z_j):
    """True position of j in frame i, 3D range, planar bearing of j from i
    and bearing of i as seen from j (all broadcastable arrays)."""
    p = rotate2d_batch(np.asarray(pos_j) - np.asarray(pos_i), -np.asarray(psi_i))
    dz = np.asarray(z_j) - np.asarray(z_i)
    rho = np.sqrt(p[..., 0] ** 2 + p[..., 1] ** 2 + dz ** 2)
    beta = np.arctan2(p[..., 1], p[..., 0])
    back = rotate2d_batch(np.asarray(pos_i) - np.asarray(pos_j), -np.asarray(psi_j))
    beta_back = np.arctan2(back[..., 1], back[..., 0])
    return p, rho, beta, beta_back


def broadcast_round(world: World, channel: ChannelParams, rng: np.random.Generator,
                    state_noise: StateNoise | None = None, lobe_frame: str = "receiver"):
    """One round of slotted broadcasts.

    Returns ``{receiver_id: [(sender_id, NeighborMeasurement), ...]}``. Each
    sender's states get one noise draw per round; every link draws its own
    RSSI variate.
    """
    sn = state_noise if state_noise is not None else world.task.state_noise
    agents = world.agents
    out: dict[int, list] = {i: [] for i in range(len(agents))}
    for k, snd in enumerate(agents):
        nv = rng.standard_normal(4)
        v_body = rotate2d(snd.vel, -snd.psi)
        v_meas = PlanarVec(v_body.x + sn.sigma_v * nv[0], v_body.y + sn.sigma_v * nv[1])
        psi_meas = snd.psi + sn.sigma_psi * nv[2]
        z_meas = snd.z + sn.sigma_z * nv[3]
        for i, rcv in enumerate(agents):
            if i == k:
                continue
            _, rho, beta, beta_back = relative_geometry(rcv.pos, rcv.psi, rcv.z, snd.pos, snd.psi, snd.z)
            lobe_beta = beta if lobe_frame == "receiver" else beta_back
            s = sample_rssi(float(rho), float(lobe_beta), channel, rng)
            out[i].append((k, NeighborMeasurement(s, v_meas, psi_meas, z_meas)))
    return out


# -- trials --------------------------------------------------------------------

@dataclass
class TrialResult:
    seed: int
    config_id: int | None
    team_size: int
    avoidance: bool
    flight_time: float
    collided: bool
    censored: bool
    collision_pair: tuple[int, int] | None
    collision_location: tuple[float, float] | None
    collision_wall_distance: float | None
    coverage: float
    range_rmse: float
    bearing_rmse: float
    n_updates: int
    m1_events: int
    m2_events: int
    exhausted_events: int
    clamped_updates: int
    trajectory: np.ndarray | None = field(default=None, repr=False)
    errors: np.ndarray | None = field(default=None, repr=False)
    diagnostics: list | None = field(default=None, repr=False)
    controls: list | None = field(default=None, repr=False)

    def record(self) -> dict:
        """Flat per-trial record (no traces)."""
        return {
            "config_id": self.config_id,
            "team_size": self.team_size,
            "avoidance": self.avoidance,
            "seed": self.seed,
            "flight_time": self.flight_time,
            "collided": self.collided,
            "censored": self.censored,
            "collision_pair": list(self.collision_pair) if self.collision_pair else None,
            "collision_location": list(self.collision_location) if self.collision_location else None,
            "collision_wall_distance": self.collision_wall_distance,
            "coverage": self.coverage,
            "range_rmse": self.range_rmse,
            "bearing_rmse": self.bearing_rmse,
            "n_updates": self.n_updates,
            "m1_events": self.m1_events,
            "m2_events": self.m2_events,
            "exhausted_events": self.exhausted_events,
            "clamped_updates": self.clamped_updates,
        }


def coverage_cells(side: float, cell: float = 0.2) -> int:
    return int(math.ceil(side / cell - 1e-9))


def _draw_noise(seed: int, n_rounds: int, n_links: int, m: int):
    """Per-trial noise: one stream per directed link (RSSI) and one per agent
    (own-state estimate noise, 4 variates per round)."""
    children = np.random.SeedSequence(seed).spawn(n_links + m)
    rssi = np.stack([np.random.default_rng(c).standard_normal(n_rounds) for c in children[:n_links]], axis=1)
    state = np.stack([np.random.default_rng(c).standard_normal((n_rounds, 4)) for c in children[n_links:]], axis=1)
    return rssi, state


class _Batch:
    """Mutable lockstep state for the trials still flying."""

    def __init__(self, cfg: Configuration, seeds, record: bool):
        task = cfg.task
        self.cfg = cfg
        self.task = task
        m = self.m = cfg.team_size
        n = self.n = len(seeds)
        self.record = record
        self.spr = task.steps_per_round
        self.n_rounds = int(math.ceil(task.t_max / task.dt_comm - 1e-9))
        self.n_steps = self.n_rounds * self.spr
        self.pairs = [(i, j) for i in range(m) for j in range(m) if i != j]
        self.rx_of = {k: np.array([p for p, (i, j) in enumerate(self.pairs) if j == k]) for k in range(m)}
        self.own_of = {k: np.array([p for p, (i, j) in enumerate(self.pairs) if i == k]) for k in range(m)}
        self.pair_i = np.array([i for i, _ in self.pairs])
        self.pair_j = np.array([j for _, j in self.pairs])
        self.upairs = unordered_pairs(m)
        self.cone_params = cfg.cone_params()
        self.search = cfg.search_config()
        self.slot_at = {s.step_offset: s.agent_id for s in comm_schedule(m, self.spr)}

        self.idx = np.arange(n)
        self.seeds = np.asarray(seeds, dtype=np.int64)
        noises = [_draw_noise(int(s), self.n_rounds, len(self.pairs), m) for s in seeds]
        self.rssi_noise = np.stack([a for a, _ in noises])     # (n, rounds, K)
        self.state_noise = np.stack([b for _, b in noises])    # (n, rounds, m, 4)

        side = task.arena_side
        start = corner_starts(m, side, task.d_safe)
        self.pos = np.broadcast_to(start, (n, m, 2)).copy()
        self.vel = np.zeros((n, m, 2))
        self.psi = np.zeros((n, m))
        self.z = np.full((n, m), task.flight_height)
        self.desired = toward_center(self.pos, side, task.v_nominal)
        self.cmd = self.desired.copy()

        K = len(self.pairs)
        x0 = np.zeros((n, K, ekf.N_STATE))
        if cfg.init_guess == "center":
            guess = side / 2.0 - self.pos[:, self.pair_i, :]
            x0[..., 0:2] = rotate2d_batch(guess, -self.psi[:, self.pair_i])
        else:
            x0[..., 0:2] = cfg.init_guess
        x0[..., 6] = self.psi[:, self.pair_j]
        x0[..., 7] = self.psi[:, self.pair_i]
        x0[..., 8] = self.z[:, self.pair_j]
        x0[..., 9] = self.z[:, self.pair_i]
        self.x = x0
        P0 = ekf.initial_covariance(cfg.init_pos_sd, cfg.measurement)
        self.P = np.broadcast_to(P0, (n, K, ekf.N_STATE, ekf.N_STATE)).copy()
        self.last_update = np.zeros(K)

        self.n_cells = coverage_cells(side)
        self.covered = np.zeros((n, self.n_cells, self.n_cells), dtype=bool)
        self._mark_coverage()

        self.sq_range = np.zeros(n)
        self.sq_bearing = np.zeros(n)
        self.n_err = np.zeros(n, dtype=np.int64)
        self.clamped = np.zeros(n, dtype=np.int64)
        self.m1_events = np.zeros(n, dtype=np.int64)
        self.m2_events = np.zeros(n, dtype=np.int64)
        self.exhausted = np.zeros(n, dtype=np.int64)

        self.results: dict[int, TrialResult] = {}
        if record:
            self.traj = [self.pos[0].copy()]
            self.err_trace: list = []
            self.diag: list = []
            self.controls: list = []

    # -- pieces --------------------------------------------------------------

    def _mark_coverage(self):
        c = np.clip((self.pos / 0.2).astype(np.int64), 0, self.n_cells - 1)
        rows = np.repeat(np.arange(len(self.pos)), self.m)
        self.covered[rows, c[..., 0].ravel(), c[..., 1].ravel()] = True

    def broadcast(self, k: int, rnd: int, t: float):
        """Sender ``k`` advertises; every receiver updates its filter on k."""
        cfg, sn = self.cfg, self.task.state_noise
        rx = self.rx_of[k]
        recv = self.pair_i[rx]
        noise_k = self.state_noise[:, rnd, k, :]
        v_body_k = rotate2d_batch(self.vel[:, k, :], -self.psi[:, k]) + sn.sigma_v * noise_k[:, 0:2]
        psi_k = self.psi[:, k] + sn.sigma_psi * noise_k[:, 2]
        z_k = self.z[:, k] + sn.sigma_z * noise_k[:, 3]

        noise_i = self.state_noise[:, rnd, recv, :]                       # (n, R, 4)
        v_body_i = rotate2d_batch(self.vel[:, recv, :], -self.psi[:, recv]) + sn.sigma_v * noise_i[..., 0:2]
        psi_i = self.psi[:, recv] + sn.sigma_psi * noise_i[..., 2]
        z_i = self.z[:, recv] + sn.sigma_z * noise_i[..., 3]

        p_true, rho, beta, beta_back = relative_geometry(
            self.pos[:, recv, :], self.psi[:, recv], self.z[:, recv],
            self.pos[:, k, None, :], self.psi[:, k, None], self.z[:, k, None],
        )
        lobe_beta = beta if cfg.lobe_frame == "receiver" else beta_back
        s = noisy_rssi(rho, lobe_beta, cfg.channel, self.rssi_noise[:, rnd, rx])

        zvec = ekf.measurement_vector(
            s, v_body_i, psi_i, z_i,
            np.broadcast_to(v_body_k[:, None, :], v_body_i.shape),
            psi_k[:, None], z_k[:, None],
        )
        x, P = self.x[:, rx], self.P[:, rx]
        dt = t - self.last_update[rx]
        if np.all(dt > 0):
            x, P = ekf.predict_batch(x, P, np.broadcast_to(dt, x.shape[:-1]), cfg.process.diag())
        x, P, innov, clamped = ekf.update_batch(x, P, zvec, cfg.measurement.diag(), cfg.channel.p_n, cfg.channel.gamma_l)
        self.x[:, rx], self.P[:, rx] = x, P
        self.last_update[rx] = t
        self.clamped += clamped.sum(axis=1)

        dz = x[..., 8] - x[..., 9]
        rho_est = np.sqrt(x[..., 0] ** 2 + x[..., 1] ** 2 + dz ** 2)
        beta_est = np.arctan2(x[..., 1], x[..., 0])
        e_rho = rho_est - rho
        e_beta = wrap_angles(beta_est - beta)
        self.sq_range += (e_rho ** 2).sum(axis=1)
        self.sq_bearing += (e_beta ** 2).sum(axis=1)
        self.n_err += len(rx)
        if self.record:
            for r_pos, i in enumerate(recv):
                self.err_trace.append((t, int(i), k, float(e_rho[0, r_pos]), float(e_beta[0, r_pos])))
                self.diag.append({
                    "t": round(t, 6), "receiver": int(i), "sender": k,
                    "est": {"rho": float(rho_est[0, r_pos]), "beta": float(beta_est[0, r_pos]),
                            "x": float(x[0, r_pos, 0]), "y": float(x[0, r_pos, 1])},
                    "true": {"rho": float(rho[0, r_pos]), "beta": float(beta[0, r_pos]),
                             "x": float(p_true[0, r_pos, 0]), "y": float(p_true[0, r_pos, 1])},
                    "innovation": [float(v) for v in innov[0, r_pos]],
                    "range_clamped": bool(clamped[0, r_pos]),
                })

    def cones_of(self, k: int):
        own = self.own_of[k]
        x = self.x[:, own]
        dz = x[..., 8] - x[..., 9]
        rho = np.maximum(np.sqrt(x[..., 0] ** 2 + x[..., 1] ** 2 + dz ** 2), ekf.EPSILON_RANGE)
        axis = np.arctan2(x[..., 1], x[..., 0])
        half = expansion_angle(rho, self.cone_params) / 2.0
        apex = x[..., 4:6]
        return apex, axis, half, np.ones(axis.shape, dtype=bool)

    def control(self, k: int, t: float):
        cones = self.cones_of(k)
        cmd, desired, cond, exh = control_batch(
            self.pos[:, k], self.vel[:, k], self.desired[:, k], self.cmd[:, k], cones,
            self.task, self.search, self.cfg.avoidance,
        )
        self.cmd[:, k], self.desired[:, k] = cmd, desired
        self.m1_events += cond == M1
        self.m2_events += cond == M2
        self.exhausted += exh
        if self.record:
            apex, axis, half, _ = cones
            others = [j for (i, j) in self.pairs if i == k]
            self.controls.append({
                "t": round(t, 6), "agent": k,
                "pos": self.pos[0, k].tolist(), "vel": self.vel[0, k].tolist(),
                "psi": float(self.psi[0, k]), "z": float(self.z[0, k]),
                "cmd": cmd[0].tolist(), "condition": CONDITION_NAMES[int(cond[0])],
                "estimates": {str(j): self.x[0, self.own_of[k][c], 0:2].tolist() for c, j in enumerate(others)},
                "cones": [{"neighbor": j, "apex": apex[0, c].tolist(), "axis": float(axis[0, c]),
                           "half_angle": float(half[0, c])} for c, j in enumerate(others)],
            })

    def finish(self, rows, t: float, collided: bool, pair_idx=None):
        side = self.task.arena_side
        for r in rows:
            trial = int(self.idx[r])
            if collided:
                a, b = self.upairs[int(pair_idx[r])]
                loc = 0.5 * (self.pos[r, a] + self.pos[r, b])
                wall = float(min(loc[0], loc[1], side - loc[0], side - loc[1]))
                pair, location = (a, b), (float(loc[0]), float(loc[1]))
            else:
                pair = location = wall = None
            n_err = max(int(self.n_err[r]), 1)
            res = TrialResult(
                seed=int(self.seeds[r]), config_id=self.cfg.id, team_size=self.m, avoidance=self.cfg.avoidance,
                flight_time=float(t), collided=collided, censored=not collided,
                collision_pair=pair, collision_location=location, collision_wall_distance=wall,
                coverage=100.0 * float(self.covered[r].sum()) / self.n_cells ** 2,
                range_rmse=math.sqrt(self.sq_range[r] / n_err),
                bearing_rmse=math.sqrt(self.sq_bearing[r] / n_err),
                n_updates=int(self.n_err[r]), m1_events=int(self.m1_events[r]),
                m2_events=int(self.m2_events[r]), exhausted_events=int(self.exhausted[r]),
                clamped_updates=int(self.clamped[r]),
            )
            if self.record:
                res.trajectory = np.array(self.traj)
                res.errors = np.array(self.err_trace).reshape(-1, 5)
                res.diagnostics = self.diag
                res.controls = self.controls
            self.results[trial] = res

    def keep(self, mask):
        for name in ("idx", "seeds", "rssi_noise", "state_noise", "pos", "vel", "psi", "z", "desired", "cmd",
                     "x", "P", "covered", "sq_range", "sq_bearing", "n_err", "clamped",
                     "m1_events", "m2_events", "exhausted"):
            setattr(self, name, getattr(self, name)[mask])

    # -- main loop -----------------------------------------------------------

    def run(self) -> list[TrialResult]:
        task = self.task
        dt, tau, side, r_c = task.dt_physics, task.vel_time_constant, task.arena_side, self.cfg.mav_radius
        for step in range(self.n_steps):
            if len(self.idx) == 0:
                break
            t = step * dt
            rnd, phase = divmod(step, self.spr)
            k = self.slot_at.get(phase)
            if k is not None:
                self.broadcast(k, rnd, t)
                self.control(k, t)
            self.pos, self.vel = physics_step_batch(self.pos, self.vel, self.cmd, dt, tau, side)
            self._mark_coverage()
            if self.record:
                self.traj.append(self.pos[0].copy())
            hit, first = collisions_batch(self.pos, r_c, self.upairs)
            if hit.any():
                rows = np.flatnonzero(hit)
                self.finish(rows, (step + 1) * dt, True, first)
                self.keep(~hit)
        if len(self.idx):
            self.finish(range(len(self.idx)), task.t_max, False)
        return [self.results[i] for i in range(self.n)]


def run_batch(cfg: Configuration, seeds, record: bool = False) -> list[TrialResult]:
    """Run one trial per seed of ``cfg`` in lockstep."""
    seeds = [int(s) for s in seeds]
    if not seeds:
        return []
    if record and len(seeds) != 1:
        raise ValueError("record=True needs exactly one seed")
    return _Batch(cfg, seeds, record).run()


def run_trial(cfg: Configuration, seed: int, record: bool = True) -> TrialResult:
    """Single trial with full traces (trajectory, errors, diagnostics)."""
    return run_batch(cfg, [seed], record=record)[0]

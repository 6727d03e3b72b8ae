"""Experiment configuration: task parameters, the twelve-configuration grid
and the YAML loader."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field, fields, is_dataclass, replace
from pathlib import Path
from typing import Any

import yaml

from .avoidance import ConeParams, SearchConfig, epsilon_from_pair
from .channel import ChannelParams, LobeModel
from .estimator import MeasurementNoiseConfig, ProcessNoiseConfig


class ConfigError(ValueError):
    """Raised for schema violations; the message carries the field path."""


@dataclass(frozen=True)
class StateNoise:
    """SDs of the noise added to broadcast and own on-board states."""

    sigma_v: float = 0.2
    sigma_psi: float = 0.2
    sigma_z: float = 0.2


@dataclass(frozen=True)
class TaskConfig:
    v_nominal: float = 0.5
    d_safe: float = 0.25
    arena_side: float = 4.0
    dt_physics: float = 0.02
    dt_comm: float = 0.2
    vel_time_constant: float = 0.5
    state_noise: StateNoise = field(default_factory=StateNoise)
    flight_height: float = 1.0
    t_max: float = 500.0

    def __post_init__(self):
        if not self.v_nominal > 0:
            raise ConfigError("v_nominal: must be > 0")
        if not self.arena_side > 2 * self.d_safe:
            raise ConfigError("arena_side: must exceed 2 * d_safe")
        if not self.dt_physics > 0:
            raise ConfigError("dt_physics: must be > 0")
        if not self.vel_time_constant >= self.dt_physics:
            raise ConfigError("vel_time_constant: must be >= dt_physics")
        ratio = self.dt_comm / self.dt_physics
        if abs(ratio - round(ratio)) > 1e-9 or round(ratio) < 1:
            raise ConfigError("dt_comm: must be an integer multiple of dt_physics")
        if not self.t_max > 0:
            raise ConfigError("t_max: must be > 0")

    @property
    def steps_per_round(self) -> int:
        return int(round(self.dt_comm / self.dt_physics))


@dataclass(frozen=True)
class ConeTuning:
    """How cone parameters are derived for a configuration.

    ``epsilon_alpha`` wins when given; otherwise it is solved from the pair
    (``rho_eq``, ``alpha_eq``) with ``rho_eq`` defaulting to half the arena side.
    """

    kappa_alpha: float = 1.0
    alpha_eq: float = 1.7
    rho_eq: float | None = None
    epsilon_alpha: float | None = None
    max_expansion: float = math.pi - 0.01


@dataclass(frozen=True)
class SearchTuning:
    step: float = 0.1
    speed_factor: float = 1.5
    max_speed_factor: float = 2.0


@dataclass(frozen=True)
class Configuration:
    """One simulated setup: arena, team and every model parameter."""

    id: int | None = None
    mav_radius: float = 0.25
    team_size: int = 2
    trials: int = 100
    task: TaskConfig = field(default_factory=TaskConfig)
    channel: ChannelParams = field(default_factory=ChannelParams)
    measurement: MeasurementNoiseConfig = field(default_factory=MeasurementNoiseConfig)
    process: ProcessNoiseConfig = field(default_factory=ProcessNoiseConfig)
    cone: ConeTuning = field(default_factory=ConeTuning)
    search: SearchTuning = field(default_factory=SearchTuning)
    avoidance: bool = True
    init_guess: str | tuple[float, float] = "center"
    init_pos_sd: float = 1.0
    lobe_frame: str = "receiver"

    def __post_init__(self):
        if self.team_size not in (2, 3):
            raise ConfigError(f"team_size: must be 2 or 3, got {self.team_size}")
        if not self.mav_radius > 0:
            raise ConfigError("mav_radius: must be > 0")
        if not self.trials >= 1:
            raise ConfigError("trials: must be >= 1")
        if self.lobe_frame not in ("receiver", "transmitter"):
            raise ConfigError("lobe_frame: must be 'receiver' or 'transmitter'")
        if isinstance(self.init_guess, str) and self.init_guess != "center":
            raise ConfigError("init_guess: must be 'center' or a pair [x, y]")
        d = self.density
        if not 0 < d < 1:
            raise ConfigError(f"density: {d:.4f} outside (0, 1)")
        self.cone_params()

    @property
    def arena_side(self) -> float:
        return self.task.arena_side

    @property
    def density(self) -> float:
        return airspace_density(self.team_size, self.mav_radius, self.arena_side)

    def cone_params(self) -> ConeParams:
        t = self.cone
        eps = t.epsilon_alpha
        if eps is None:
            rho_eq = t.rho_eq if t.rho_eq is not None else self.arena_side / 2.0
            eps = epsilon_from_pair(rho_eq, t.alpha_eq, self.mav_radius, t.kappa_alpha)
        try:
            return ConeParams(self.mav_radius, t.kappa_alpha, eps, t.max_expansion)
        except ValueError as e:
            raise ConfigError(f"cone: {e}") from e

    def search_config(self) -> SearchConfig:
        s = self.search
        return SearchConfig(s.step, s.speed_factor, s.max_speed_factor * self.task.v_nominal)

    def with_(self, **changes) -> "Configuration":
        return replace(self, **changes)


def airspace_density(team_size: int, radius: float, side: float) -> float:
    """Fraction of the arena covered by the agents' discs."""
    return team_size * math.pi * radius ** 2 / side ** 2


# Staggered grid: rows share MAV diameter (1-4, 5-8, 9-12); columns share the
# arena side (1 | 2-5-9 | 3-6-10 | 4-7-11 | 8-12).
ARENA_SIDES = (1.5, 2.0, 3.0, 4.0, 5.0)
MAV_DIAMETERS = (0.1, 0.3, 0.5)
GRID: dict[int, tuple[float, float]] = {
    1: (1.5, 0.1), 2: (2.0, 0.1), 3: (3.0, 0.1), 4: (4.0, 0.1),
    5: (2.0, 0.3), 6: (3.0, 0.3), 7: (4.0, 0.3), 8: (5.0, 0.3),
    9: (2.0, 0.5), 10: (3.0, 0.5), 11: (4.0, 0.5), 12: (5.0, 0.5),
}
SMALL_ARENA_IDS = (1, 2, 5, 9)
ABLATION_IDS = (1, 2, 5, 6, 9, 10)


def grid_configuration(cid: int, team_size: int = 2, **overrides) -> Configuration:
    """Configuration ``cid`` of the default grid (arena side, MAV diameter)."""
    if cid not in GRID:
        raise ConfigError(f"id: unknown configuration {cid}; expected 1-12")
    side, diameter = GRID[cid]
    task = overrides.pop("task", TaskConfig())
    task = replace(task, arena_side=side)
    return Configuration(id=cid, mav_radius=diameter / 2.0, team_size=team_size, task=task, **overrides)


# -- YAML loading -------------------------------------------------------------

@dataclass(frozen=True)
class Experiment:
    """A resolved experiment: configurations plus run-level settings."""

    configurations: tuple[Configuration, ...]
    master_seed: int = 0
    name: str = "experiment"


_SECTION_TYPES = {
    "task": TaskConfig,
    "measurement": MeasurementNoiseConfig,
    "process": ProcessNoiseConfig,
    "cone": ConeTuning,
    "search": SearchTuning,
}
_TOP_KEYS = {"id", "arena_side", "mav_radius", "mav_diameter", "team_size", "trials",
             "avoidance", "init_guess", "init_pos_sd", "lobe_frame", "channel", *_SECTION_TYPES}


def _build(cls, data: Any, path: str):
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: expected a mapping, got {type(data).__name__}")
    names = {f.name: f for f in fields(cls)}
    kwargs = {}
    for k, v in data.items():
        if k not in names:
            raise ConfigError(f"{path}.{k}: unknown field (allowed: {', '.join(sorted(names))})")
        if cls is TaskConfig and k == "state_noise":
            v = _build(StateNoise, v, f"{path}.{k}")
        kwargs[k] = v
    try:
        return cls(**kwargs)
    except ConfigError as e:
        raise ConfigError(f"{path}.{e}") from e
    except (TypeError, ValueError) as e:
        raise ConfigError(f"{path}: {e}") from e


def _merge(base: dict, over: dict) -> dict:
    out = dict(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = v
    return out


def _build_channel(data: Any, path: str) -> ChannelParams:
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: expected a mapping")
    data = dict(data)
    lobe = data.pop("lobe", "unitary")
    if lobe in (None, False, "none"):
        lobe_obj = None
    elif lobe == "unitary":
        lobe_obj = LobeModel.unitary()
    elif isinstance(lobe, dict):
        lobe_obj = _build(LobeModel, lobe, f"{path}.lobe")
    else:
        raise ConfigError(f"{path}.lobe: expected 'unitary', 'none' or a mapping")
    try:
        return ChannelParams(lobe=lobe_obj, **data)
    except TypeError as e:
        raise ConfigError(f"{path}: {e}") from e
    except ValueError as e:
        raise ConfigError(f"{path}: {e}") from e


def configuration_from_dict(data: dict, path: str = "configurations[0]") -> Configuration:
    """Resolve one configuration block, applying grid defaults for ``id``."""
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: expected a mapping")
    for k in data:
        if k not in _TOP_KEYS:
            raise ConfigError(f"{path}.{k}: unknown field")
    cid = data.get("id")
    if cid is not None and cid not in GRID:
        raise ConfigError(f"{path}.id: unknown configuration {cid}; expected 1-12")
    side, diameter = GRID.get(cid, (None, None))
    task_data = dict(data.get("task") or {})
    if "arena_side" in data:
        task_data["arena_side"] = data["arena_side"]
    elif side is not None:
        task_data.setdefault("arena_side", side)
    kwargs: dict[str, Any] = {"id": cid}
    kwargs["task"] = _build(TaskConfig, task_data, f"{path}.task")
    for name in ("measurement", "process", "cone", "search"):
        if name in data:
            kwargs[name] = _build(_SECTION_TYPES[name], data[name], f"{path}.{name}")
    if "channel" in data:
        kwargs["channel"] = _build_channel(data["channel"], f"{path}.channel")
    if "mav_radius" in data:
        kwargs["mav_radius"] = data["mav_radius"]
    elif "mav_diameter" in data:
        kwargs["mav_radius"] = data["mav_diameter"] / 2.0
    elif diameter is not None:
        kwargs["mav_radius"] = diameter / 2.0
    for k in ("team_size", "trials", "avoidance", "init_pos_sd", "lobe_frame"):
        if k in data:
            kwargs[k] = data[k]
    if "init_guess" in data:
        g = data["init_guess"]
        kwargs["init_guess"] = g if isinstance(g, str) else tuple(float(v) for v in g)
    try:
        return Configuration(**kwargs)
    except ConfigError as e:
        raise ConfigError(f"{path}.{e}") from e
    except (TypeError, ValueError) as e:
        raise ConfigError(f"{path}: {e}") from e


def experiment_from_dict(doc: dict) -> Experiment:
    if not isinstance(doc, dict):
        raise ConfigError("<root>: expected a mapping")
    allowed = {"name", "master_seed", "defaults", "configurations", "team_sizes"}
    for k in doc:
        if k not in allowed:
            raise ConfigError(f"<root>.{k}: unknown field (allowed: {', '.join(sorted(allowed))})")
    defaults = doc.get("defaults") or {}
    if not isinstance(defaults, dict):
        raise ConfigError("defaults: expected a mapping")
    blocks = doc.get("configurations")
    if blocks is None:
        blocks = [{"id": i} for i in GRID]
    if not isinstance(blocks, list) or not blocks:
        raise ConfigError("configurations: expected a non-empty list")
    team_sizes = doc.get("team_sizes")
    out = []
    for n, block in enumerate(blocks):
        if isinstance(block, int):
            block = {"id": block}
        if not isinstance(block, dict):
            raise ConfigError(f"configurations[{n}]: expected a mapping or an id")
        merged = _merge(defaults, block)
        if team_sizes is not None and "team_size" not in block:
            for m in team_sizes:
                out.append(configuration_from_dict({**merged, "team_size": m}, f"configurations[{n}]"))
        else:
            out.append(configuration_from_dict(merged, f"configurations[{n}]"))
    seed = doc.get("master_seed", 0)
    if not isinstance(seed, int) or seed < 0:
        raise ConfigError("master_seed: expected a non-negative integer")
    return Experiment(tuple(out), seed, str(doc.get("name", "experiment")))


def load_config(path) -> Experiment:
    """Read a YAML experiment file. Raises ``ConfigError`` with the field path."""
    p = Path(path)
    if not p.exists():
        raise ConfigError(f"{p}: file not found")
    try:
        doc = yaml.safe_load(p.read_text())
    except yaml.YAMLError as e:
        raise ConfigError(f"{p}: invalid YAML: {e}") from e
    return experiment_from_dict(doc or {})


def to_plain(obj):
    """Dataclass tree to JSON-friendly primitives."""
    if is_dataclass(obj):
        return {k: to_plain(v) for k, v in asdict(obj).items()}
    if isinstance(obj, dict):
        return {k: to_plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_plain(v) for v in obj]
    return obj

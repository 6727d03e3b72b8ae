"""Monte Carlo sweep over configurations, aggregation and summary statistics."""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import stats

from ..config import Configuration, Experiment
from ..sim import run_batch
from .output import build_id

BORDER_BAND = 0.5    # m, collision counted as "near the border" within this distance
COVERAGE_CELL = 0.2  # m


def trial_seeds(master_seed: int, trials: int) -> list[int]:
    """Trial ``k`` of every configuration uses seed ``master_seed + k``."""
    return [master_seed + k for k in range(trials)]


def _run_job(job):
    cfg, seeds = job
    return [r.record() for r in run_batch(cfg, seeds)]


def _jobs(experiment: Experiment, avoidance_modes, trials: int | None):
    jobs = []
    for cfg in experiment.configurations:
        n = trials if trials is not None else cfg.trials
        for mode in avoidance_modes if avoidance_modes is not None else (cfg.avoidance,):
            jobs.append((cfg.with_(avoidance=bool(mode), trials=n), trial_seeds(experiment.master_seed, n)))
    return jobs


@dataclass
class SweepResult:
    name: str
    master_seed: int
    build: str
    records: list[dict] = field(repr=False)
    aggregates: list[dict]

    def row(self, config_id: int, team_size: int, avoidance: bool = True) -> dict:
        for r in self.aggregates:
            if (r["config_id"], r["team_size"], r["avoidance"]) == (config_id, team_size, avoidance):
                return r
        raise KeyError((config_id, team_size, avoidance))

    def flight_times(self, config_id: int, team_size: int, avoidance: bool = True) -> np.ndarray:
        return np.array([
            r["flight_time"] for r in self.records
            if (r["config_id"], r["team_size"], r["avoidance"]) == (config_id, team_size, avoidance)
        ])


def run_sweep(
    experiment: Experiment,
    parallelism: int = 1,
    avoidance_modes=None,
    trials: int | None = None,
    build: str | None = None,
) -> SweepResult:
    """Run every configuration of ``experiment`` and aggregate.

    ``avoidance_modes`` is e.g. ``(True, False)`` to run both; by default each
    configuration's own flag is used. Results do not depend on ``parallelism``.
    """
    jobs = _jobs(experiment, avoidance_modes, trials)
    if parallelism > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=parallelism) as pool:
            chunks = list(pool.map(_run_job, jobs))
    else:
        chunks = [_run_job(j) for j in jobs]
    records = []
    for (cfg, _), chunk in zip(jobs, chunks):
        for rec in chunk:
            rec.update(arena_side=cfg.arena_side, mav_diameter=2 * cfg.mav_radius, density=cfg.density)
            records.append(rec)
    build = build if build is not None else build_id()
    return SweepResult(experiment.name, experiment.master_seed, build, records,
                       aggregate(records, experiment.master_seed, build))


def _mean(values) -> float:
    return float(np.mean(values)) if len(values) else math.nan


def aggregate(records: list[dict], master_seed: int, build: str) -> list[dict]:
    """One row per (configuration, team size, avoidance) in first-seen order.

    ``mean_flight_time`` counts censored trials at the cap;
    ``mean_flight_time_completed`` averages collided trials only.
    """
    groups: dict[tuple, list[dict]] = {}
    for r in records:
        groups.setdefault((r["config_id"], r["team_size"], r["avoidance"]), []).append(r)
    rows = []
    for (cid, m, avoid), recs in groups.items():
        ft = np.array([r["flight_time"] for r in recs])
        done = [r for r in recs if r["collided"]]
        near = [r for r in done if r["collision_wall_distance"] <= BORDER_BAND]
        rows.append({
            "config_id": cid,
            "team_size": m,
            "avoidance": avoid,
            "arena_side": recs[0]["arena_side"],
            "mav_diameter": recs[0]["mav_diameter"],
            "density": recs[0]["density"],
            "trials": len(recs),
            "mean_flight_time": float(ft.mean()),
            "sd_flight_time": float(ft.std(ddof=1)) if len(ft) > 1 else 0.0,
            "censored": len(recs) - len(done),
            "survival_fraction": (len(recs) - len(done)) / len(recs),
            "mean_flight_time_completed": _mean([r["flight_time"] for r in done]),
            "coverage": _mean([r["coverage"] for r in recs]),
            "border_fraction": len(near) / len(done) if done else math.nan,
            "range_rmse": _mean([r["range_rmse"] for r in recs]),
            "bearing_rmse": _mean([r["bearing_rmse"] for r in recs]),
            "master_seed": master_seed,
            "build": build,
        })
    return rows


def area_coverage(trajectories, arena_side: float, cell: float = COVERAGE_CELL) -> float:
    """Percentage of grid cells visited by any sampled position.

    ``trajectories`` is any array whose last axis is ``(x, y)``.
    """
    pts = np.asarray(trajectories, dtype=float).reshape(-1, 2)
    n = int(math.ceil(arena_side / cell - 1e-9))
    idx = np.clip((pts / cell).astype(np.int64), 0, n - 1)
    visited = np.unique(idx[:, 0] * n + idx[:, 1]).size
    return 100.0 * visited / n ** 2


# -- statistics ----------------------------------------------------------------

@dataclass(frozen=True)
class ZTest:
    z: float
    p_value: float
    reject: bool


def z_test(treated, control, confidence: float = 0.95) -> ZTest:
    """One-sided two-sample z-test that ``treated`` has the larger mean."""
    a, b = np.asarray(treated, float), np.asarray(control, float)
    se = math.sqrt(a.var(ddof=1) / a.size + b.var(ddof=1) / b.size)
    diff = a.mean() - b.mean()
    if se == 0.0:
        z = math.inf if diff > 0 else (-math.inf if diff < 0 else 0.0)
    else:
        z = diff / se
    p = float(stats.norm.sf(z))
    return ZTest(float(z), p, p < 1.0 - confidence)


@dataclass(frozen=True)
class TrendReport:
    team_size: int
    spearman: float
    spearman_p: float
    slope: float
    intercept: float
    residuals: dict
    below_trend: tuple
    small_arena_below: bool


def correlation_report(aggregates: list[dict], small_arena_ids=(1, 2, 5, 9)) -> dict[int, TrendReport]:
    """Rank correlation of mean flight time with density, per team size.

    The trend is a least-squares line of mean flight time against
    ``log10(density)``; configurations with a negative residual are below it.
    """
    out = {}
    rows = [r for r in aggregates if r["avoidance"]]
    for m in sorted({r["team_size"] for r in rows}):
        sub = sorted((r for r in rows if r["team_size"] == m), key=lambda r: r["config_id"])
        if len(sub) < 3:
            continue
        dens = np.array([r["density"] for r in sub])
        ft = np.array([r["mean_flight_time"] for r in sub])
        rho, p = stats.spearmanr(dens, ft)
        slope, intercept = np.polyfit(np.log10(dens), ft, 1)
        resid = ft - (slope * np.log10(dens) + intercept)
        residuals = {r["config_id"]: float(e) for r, e in zip(sub, resid)}
        below = tuple(c for c, e in residuals.items() if e < 0)
        present = [c for c in small_arena_ids if c in residuals]
        out[m] = TrendReport(m, float(rho), float(p), float(slope), float(intercept), residuals, below,
                             bool(present) and all(c in below for c in present))
    return out


# -- ablation ------------------------------------------------------------------

ABLATION_VARIANTS = ("nominal", "reduced_noise", "no_lobes")


def ablation_variant(cfg: Configuration, variant: str) -> Configuration:
    """``reduced_noise`` scales shadowing by 3/5 (5 dB to 3 dB); ``no_lobes`` drops the lobe model."""
    if variant == "nominal":
        return cfg
    if variant == "reduced_noise":
        return cfg.with_(channel=replace(cfg.channel, sigma_shadow=cfg.channel.sigma_shadow * 0.6))
    if variant == "no_lobes":
        return cfg.with_(channel=replace(cfg.channel, lobe=None))
    raise ValueError(f"unknown variant {variant!r}")


@dataclass
class AblationResult:
    sweeps: dict[str, SweepResult]
    rows: list[dict]

    def lobe_wins(self, team_size: int) -> int:
        """Configurations where dropping lobes helps at least as much as less noise."""
        return sum(r["no_lobes_gain"] >= r["reduced_noise_gain"] for r in self.rows if r["team_size"] == team_size)


def ablation(experiment: Experiment, parallelism: int = 1, trials: int | None = None,
             build: str | None = None, nominal: SweepResult | None = None) -> AblationResult:
    """Nominal, reduced-noise and lobe-free variants with shared trial seeds.

    A previously run ``nominal`` sweep of the same experiment may be passed in
    to skip re-running it.
    """
    sweeps = {"nominal": nominal} if nominal is not None else {}
    for v in ABLATION_VARIANTS:
        if v in sweeps:
            continue
        exp = replace(experiment, configurations=tuple(ablation_variant(c, v) for c in experiment.configurations))
        sweeps[v] = run_sweep(exp, parallelism, trials=trials, build=build)
    rows = []
    for base in sweeps["reduced_noise"].aggregates:
        key = (base["config_id"], base["team_size"], base["avoidance"])
        ft = {v: sweeps[v].row(*key)["mean_flight_time"] for v in ABLATION_VARIANTS}
        rows.append({
            "config_id": key[0],
            "team_size": key[1],
            "avoidance": key[2],
            "density": base["density"],
            **{f"{v}_mean_flight_time": ft[v] for v in ABLATION_VARIANTS},
            "reduced_noise_gain": ft["reduced_noise"] - ft["nominal"],
            "no_lobes_gain": ft["no_lobes"] - ft["nominal"],
            "master_seed": base["master_seed"],
            "build": base["build"],
        })
    return AblationResult(sweeps, rows)

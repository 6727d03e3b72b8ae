"""Acceptance gate: every criterion runs at its stated tolerance and logs one
PASS/FAIL line (shown in the terminal summary).

The 100-trial sweeps are shared through session fixtures; expect several
minutes on one core.
"""

import math
import time
from dataclasses import replace

import numpy as np
import pytest

from commloc.avoidance import Cone, ConeParams, epsilon_from_pair, expansion_angle, in_cone
from commloc.channel import ChannelParams, invert_ld, ld_model
from commloc.config import ABLATION_IDS, GRID, SMALL_ARENA_IDS, Experiment, grid_configuration
from commloc.estimator import observe_batch, transition_jacobian
from commloc.geometry import PlanarVec
from commloc.harness import (
    CircleParams,
    ablation,
    correlation_report,
    csv_text,
    long_rows,
    run_sweep,
    scenario_circle,
    z_test,
)

from conftest import ACCEPTANCE_LINES

TRIALS = 100
MASTER_SEED = 0
TEAM_SIZES = (2, 3)


def verdict(n: int, name: str, ok: bool, detail: str):
    line = f"criterion {n} ({name}): {'PASS' if ok else 'FAIL'} | {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    assert ok, line


def grid_experiment(ids=tuple(GRID)) -> Experiment:
    return Experiment(tuple(grid_configuration(c, m, trials=TRIALS) for c in ids for m in TEAM_SIZES),
                      MASTER_SEED, "grid")


@pytest.fixture(scope="session")
def baseline():
    start = time.perf_counter()
    sweep = run_sweep(grid_experiment(), avoidance_modes=(False,), build="acceptance")
    return sweep, time.perf_counter() - start


@pytest.fixture(scope="session")
def grid():
    return run_sweep(grid_experiment(), avoidance_modes=(True,), build="acceptance")


def test_criterion_1_baseline_hazard(baseline):
    sweep, elapsed = baseline
    worst = max(r["mean_flight_time"] for r in sweep.aggregates)
    head_on = grid_configuration(11, 2, avoidance=False)
    ho = run_sweep(Experiment((head_on.with_(trials=TRIALS),), MASTER_SEED), build="acceptance")
    ho_times = ho.flight_times(11, 2, False)
    ok = worst < 60.0 and bool(np.all(ho_times < 20.0)) and elapsed < 60.0
    verdict(1, "baseline hazard", ok,
            f"max mean flight time without avoidance {worst:.2f} s over {len(sweep.aggregates)} groups; "
            f"head-on max {ho_times.max():.2f} s; {len(sweep.records)} trials in {elapsed:.1f} s")


def test_criterion_2_avoidance_efficacy(grid, baseline):
    off = baseline[0]
    failures, zs = [], []
    for cid in GRID:
        for m in TEAM_SIZES:
            zt = z_test(grid.flight_times(cid, m, True), off.flight_times(cid, m, False))
            zs.append(zt.z)
            if not zt.reject:
                failures.append((cid, m, zt.z))
    verdict(2, "avoidance efficacy", not failures,
            f"one-sided z-test at 95% rejects in {len(zs) - len(failures)}/{len(zs)} groups; min z {min(zs):.2f}")


def test_criterion_3_density_trend(grid):
    rep = correlation_report(grid.aggregates, SMALL_ARENA_IDS)
    ok = all(r.spearman < 0 and r.small_arena_below for r in rep.values()) and set(rep) == set(TEAM_SIZES)
    detail = "; ".join(
        f"m={m}: spearman {r.spearman:.3f}, below trend {list(r.below_trend)}" for m, r in rep.items()
    )
    verdict(3, "density trend", ok, detail)


def test_criterion_4_team_size_effect(grid):
    bad = []
    for cid in GRID:
        two, three = grid.row(cid, 2), grid.row(cid, 3)
        if not (three["mean_flight_time"] <= two["mean_flight_time"] and three["coverage"] < two["coverage"]):
            bad.append(cid)
    verdict(4, "team-size effect", not bad,
            f"3-agent flight time <= and coverage < 2-agent in {12 - len(bad)}/12 configurations"
            + (f"; violations {bad}" if bad else ""))


def test_criterion_5_ablation_directionality(grid):
    exp = grid_experiment(ABLATION_IDS)
    res = ablation(exp, build="acceptance", nominal=grid)
    wins = {m: res.lobe_wins(m) for m in TEAM_SIZES}
    detail = "; ".join(
        f"m={m}: lobe removal gain >= noise reduction gain in {w}/6 "
        + "(" + ", ".join(f"{r['config_id']}: {r['no_lobes_gain']:+.0f} vs {r['reduced_noise_gain']:+.0f}"
                          for r in res.rows if r["team_size"] == m) + ")"
        for m, w in wins.items()
    )
    verdict(5, "ablation directionality", all(w >= 4 for w in wins.values()), detail)


def test_criterion_6_filter_validation():
    params = CircleParams(realizations=50, seed=MASTER_SEED)
    start = time.perf_counter()
    rep = scenario_circle(params)
    elapsed = time.perf_counter() - start
    ekf_err, ld_err = rep.mean_abs_range_error, rep.mean_abs_ld_range_error
    bearing = rep.median_abs_bearing_error(20.0)
    ok = ekf_err < ld_err and bearing < 0.3 and elapsed < 10.0
    verdict(6, "filter validation", ok,
            f"mean |range error| filter {ekf_err:.3f} m vs inverted model {ld_err:.3f} m; "
            f"median |bearing error| after 20 s {bearing:.3f} rad; {elapsed:.2f} s")


def _h(x):
    return observe_batch(x, -63.0, 2.0)[0]


def test_criterion_7_numerical_correctness():
    rng = np.random.default_rng(MASTER_SEED)
    worst = 0.0
    for _ in range(100):
        x = np.concatenate((rng.uniform(-4, 4, 2), rng.uniform(-1, 1, 4),
                            rng.uniform(-math.pi, math.pi, 2), rng.uniform(0.5, 2.0, 2)))
        if math.hypot(x[0], x[1]) < 0.3:
            x[0] += 0.5
        H = observe_batch(x, -63.0, 2.0)[1]
        dt = rng.uniform(0.05, 1.0)
        F = transition_jacobian(dt)
        step = 1e-6
        for k in range(10):
            e = np.zeros(10)
            e[k] = step
            fd_h = (_h(x + e) - _h(x - e)) / (2 * step)
            xp, xm = x + e, x - e
            fd_f = ((xp + dt * np.r_[xp[4] - xp[2], xp[5] - xp[3], np.zeros(8)])
                    - (xm + dt * np.r_[xm[4] - xm[2], xm[5] - xm[3], np.zeros(8)])) / (2 * step)
            for an, fd in ((H[:, k], fd_h), (F[:, k], fd_f)):
                worst = max(worst, float(np.max(np.abs(an - fd) / np.maximum(np.abs(an), 1.0))))

    ch = ChannelParams()
    rho = np.geomspace(0.01, 100, 1000)
    ld_trip = float(np.max(np.abs(invert_ld(ld_model(rho, ch), ch) - rho) / rho))

    eps_trip = 0.0
    for rho_eq in (0.75, 1.0, 1.5, 2.0, 2.5):
        for r in (0.05, 0.15, 0.25):
            eps = epsilon_from_pair(rho_eq, 1.7, r, 1.0)
            eps_trip = max(eps_trip, abs(expansion_angle(rho_eq, ConeParams(r, 1.0, eps)) - 1.7))

    asym = abs(expansion_angle(1e15, ConeParams(0.1, 1.0, 0.5)) - math.pi / 2)
    ok = worst < 1e-5 and ld_trip < 1e-9 and eps_trip < 1e-12 and asym < 1e-9
    verdict(7, "numerical correctness", ok,
            f"jacobian rel err {worst:.1e}; ld round trip {ld_trip:.1e}; "
            f"tuning round trip {eps_trip:.1e}; asymptote err {asym:.1e}")


def test_criterion_8_geometry_oracle():
    rng = np.random.default_rng(MASTER_SEED + 8)
    n_rays = 4001
    disagree = skipped = 0
    for _ in range(10_000):
        cone = Cone(PlanarVec(*rng.uniform(-1, 1, 2)), rng.uniform(-math.pi, math.pi),
                    rng.uniform(0.01, (math.pi - 0.01) / 2))
        v = rng.uniform(-2, 2, 2)
        d = v - np.asarray(cone.apex)
        offset = abs(math.remainder(math.atan2(d[1], d[0]) - cone.axis_bearing, 2 * math.pi))
        if abs(offset - cone.half_angle) < 1e-9:
            skipped += 1
            continue
        u = d / np.linalg.norm(d)
        angles = cone.axis_bearing + np.linspace(-cone.half_angle, cone.half_angle, n_rays)
        rays = np.stack((np.cos(angles), np.sin(angles)), axis=1)
        best = int(np.argmax(rays @ u))
        if rays[best] @ u < 0:
            truth = False
        elif 0 < best < n_rays - 1:
            truth = True
        else:
            cross = rays[best][0] * u[1] - rays[best][1] * u[0]
            truth = bool(cross <= 0) if best == n_rays - 1 else bool(cross >= 0)
        disagree += in_cone(v, cone) != truth
    verdict(8, "geometry oracle", disagree == 0,
            f"{disagree} disagreements in {10_000 - skipped} cases ({skipped} inside the 1e-9 band)")


def test_criterion_9_determinism():
    # a 60 s horizon keeps the double sweep short; determinism does not depend on it
    cfgs = []
    for c in GRID:
        for m in TEAM_SIZES:
            cfg = grid_configuration(c, m, trials=5)
            cfgs.append(cfg.with_(task=replace(cfg.task, t_max=60.0)))
    exp = Experiment(tuple(cfgs), 42, "det")
    texts = []
    for _ in range(2):
        s = run_sweep(exp, avoidance_modes=(True, False), build="acceptance")
        texts.append(csv_text(s.aggregates) + csv_text(long_rows(s.aggregates)))
    verdict(9, "determinism", texts[0] == texts[1],
            f"two sweeps with master seed 42: {len(texts[0])} bytes, identical={texts[0] == texts[1]}")

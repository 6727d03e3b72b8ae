"""Command-line front door: ``run``, ``sweep``, ``ablation`` and ``scenario circle``."""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

from .config import ABLATION_IDS, GRID, ConfigError, Experiment, configuration_from_dict, load_config, to_plain
from .harness import (
    CircleParams,
    ablation,
    correlation_report,
    run_sweep,
    scenario_circle,
    write_csv,
    write_jsonl,
    write_sweep,
    z_test,
)
from .harness.output import build_id
from .sim import run_trial


def _experiment(args, default_ids) -> Experiment:
    if args.config:
        exp = load_config(args.config)
    else:
        blocks = [{"id": i, "team_size": m} for i in default_ids for m in args.team_sizes]
        exp = Experiment(tuple(configuration_from_dict(b, f"configurations[{n}]") for n, b in enumerate(blocks)))
    if getattr(args, "ids", None):
        exp = replace(exp, configurations=tuple(c for c in exp.configurations if c.id in args.ids))
        if not exp.configurations:
            raise ConfigError("--ids: no configuration selected")
    if args.seed is not None:
        exp = replace(exp, master_seed=args.seed)
    if args.no_avoidance:
        exp = replace(exp, configurations=tuple(c.with_(avoidance=False) for c in exp.configurations))
    return exp


def _print_rows(rows, columns):
    print(",".join(columns))
    for r in rows:
        print(",".join(f"{r[c]:.4g}" if isinstance(r[c], float) else str(r[c]) for c in columns))


def cmd_run(args) -> int:
    if args.config:
        cfg = load_config(args.config).configurations[0]
    else:
        cfg = configuration_from_dict({"id": args.id, "team_size": args.team_size})
    if args.no_avoidance:
        cfg = cfg.with_(avoidance=False)
    seed = args.seed if args.seed is not None else 0
    res = run_trial(cfg, seed)
    out = Path(args.out)
    build = build_id()
    extra = {"config_id": cfg.id, "seed": seed, "build": build}
    write_jsonl(out / "run_controls.jsonl", res.controls, extra)
    write_jsonl(out / "run_diagnostics.jsonl", res.diagnostics, extra)
    summary = {**res.record(), "build": build, "configuration": to_plain(cfg)}
    (out / "run_summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    if args.figures:
        from .harness import figures

        figures.trajectory(res, cfg.arena_side, out / "run_trajectory.png")
    _print_rows([res.record()], ["config_id", "team_size", "avoidance", "seed", "flight_time", "collided",
                                 "coverage", "range_rmse", "bearing_rmse"])
    return 0


def cmd_sweep(args) -> int:
    exp = _experiment(args, sorted(GRID))
    modes = (True, False) if args.compare else None
    sweep = run_sweep(exp, args.parallelism, avoidance_modes=modes, trials=args.trials)
    out = Path(args.out)
    write_sweep(out, sweep)
    if args.compare:
        rows = []
        for r in sweep.aggregates:
            if not r["avoidance"]:
                continue
            on = sweep.flight_times(r["config_id"], r["team_size"], True)
            off = sweep.flight_times(r["config_id"], r["team_size"], False)
            zt = z_test(on, off)
            rows.append({"config_id": r["config_id"], "team_size": r["team_size"],
                         "mean_on": float(on.mean()), "mean_off": float(off.mean()),
                         "z": zt.z, "p_value": zt.p_value, "reject": zt.reject,
                         "master_seed": sweep.master_seed, "build": sweep.build})
        write_csv(out / "sweep_ztest.csv", rows)
    trend = correlation_report(sweep.aggregates)
    if trend:
        write_csv(out / "sweep_trend.csv", [
            {"team_size": t.team_size, "spearman": t.spearman, "spearman_p": t.spearman_p, "slope": t.slope,
             "intercept": t.intercept, "below_trend": " ".join(map(str, t.below_trend)),
             "small_arena_below": t.small_arena_below, "master_seed": sweep.master_seed, "build": sweep.build}
            for t in trend.values()])
    if args.figures:
        from .harness import figures

        figures.flight_time_vs_density(sweep.aggregates, out / "flight_time_vs_density.png")
        figures.coverage_bars(sweep.aggregates, out / "coverage.png")
    _print_rows(sweep.aggregates, ["config_id", "team_size", "avoidance", "density", "mean_flight_time",
                                   "censored", "coverage"])
    return 0


def cmd_ablation(args) -> int:
    exp = _experiment(args, ABLATION_IDS)
    res = ablation(exp, args.parallelism, trials=args.trials)
    out = Path(args.out)
    write_csv(out / "ablation.csv", res.rows)
    for name, sweep in res.sweeps.items():
        write_sweep(out, sweep, prefix=f"ablation_{name}")
    if args.figures:
        from .harness import figures

        figures.ablation_bars(res.rows, out / "ablation.png")
    _print_rows(res.rows, ["config_id", "team_size", "nominal_mean_flight_time", "reduced_noise_mean_flight_time",
                           "no_lobes_mean_flight_time"])
    return 0


def cmd_circle(args) -> int:
    params = CircleParams(realizations=args.trials or 50, seed=args.seed if args.seed is not None else 0)
    rep = scenario_circle(params)
    out = Path(args.out)
    summary = {**rep.summary(params.settle_time), "seed": params.seed, "build": build_id()}
    write_csv(out / "circle_summary.csv", [summary])
    trace = [{"t": float(t), "true_range": float(rho),
              "abs_range_error": float(abs(rep.range_error[:, k]).mean()),
              "abs_ld_range_error": float(abs(rep.ld_range_error[:, k]).mean()),
              "abs_bearing_error": float(abs(rep.bearing_error[:, k]).mean())}
             for k, (t, rho) in enumerate(zip(rep.times, rep.true_range))]
    write_csv(out / "circle_trace.csv", trace)
    if args.figures:
        from .harness import figures

        figures.circle_errors(rep, out / "circle_errors.png")
    _print_rows([summary], list(summary))
    return 0


def _common(p: argparse.ArgumentParser, trials=True):
    p.add_argument("--config", help="YAML experiment file")
    p.add_argument("--seed", type=int, help="master seed (trial k uses seed + k)")
    if trials:
        p.add_argument("--trials", type=int, help="trials per configuration")
    p.add_argument("--out", default="out", help="output directory (default: out)")
    p.add_argument("--figures", action="store_true", help="also render PNG figures")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="commloc", description=__doc__)
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="single trial with full diagnostics")
    _common(p, trials=False)
    p.add_argument("--id", type=int, default=11, help="grid configuration id (default 11)")
    p.add_argument("--team-size", type=int, default=2)
    p.add_argument("--no-avoidance", action="store_true")
    p.set_defaults(func=cmd_run)

    for name, func, helptext in (("sweep", cmd_sweep, "Monte Carlo over the configuration grid"),
                                 ("ablation", cmd_ablation, "nominal / reduced-noise / lobe-free comparison")):
        p = sub.add_parser(name, help=helptext)
        _common(p)
        p.add_argument("--parallelism", type=int, default=1, help="worker processes")
        p.add_argument("--no-avoidance", action="store_true")
        p.add_argument("--ids", type=int, nargs="+", help="restrict to these configuration ids")
        p.add_argument("--team-sizes", type=int, nargs="+", default=[2, 3])
        if name == "sweep":
            p.add_argument("--compare", action="store_true",
                           help="run with and without avoidance and write z-test results")
        p.set_defaults(func=func)

    p = sub.add_parser("scenario", help="filter validation scenarios")
    ssub = p.add_subparsers(dest="scenario", required=True)
    c = ssub.add_parser("circle", help="circular flight around a fixed receiver")
    _common(c)
    c.set_defaults(func=cmd_circle)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if getattr(args, "parallelism", 1) < 1:
        print("error: --parallelism must be >= 1", file=sys.stderr)
        return 2
    if getattr(args, "trials", None) is not None and args.trials < 1:
        print("error: --trials must be >= 1", file=sys.stderr)
        return 2
    try:
        return args.func(args)
    except (ConfigError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())

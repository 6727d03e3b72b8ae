"""Optional matplotlib renderings of harness results, written as PNG files."""

from __future__ import annotations

from pathlib import Path

import numpy as np


def _pyplot():
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    return plt


def flight_time_vs_density(aggregates: list[dict], path) -> Path:
    plt = _pyplot()
    fig, ax = plt.subplots(figsize=(6, 4))
    for m, marker in ((2, "o"), (3, "s")):
        rows = [r for r in aggregates if r["team_size"] == m and r["avoidance"]]
        if not rows:
            continue
        d = [r["density"] for r in rows]
        ft = [r["mean_flight_time"] for r in rows]
        ax.scatter(d, ft, marker=marker, label=f"{m} agents")
        for r in rows:
            ax.annotate(str(r["config_id"]), (r["density"], r["mean_flight_time"]), fontsize=7,
                        xytext=(3, 3), textcoords="offset points")
    ax.set_xscale("log")
    ax.set_xlabel("airspace density")
    ax.set_ylabel("mean flight time [s]")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return Path(path)


def coverage_bars(aggregates: list[dict], path) -> Path:
    plt = _pyplot()
    fig, ax = plt.subplots(figsize=(7, 3.5))
    ids = sorted({r["config_id"] for r in aggregates})
    x = np.arange(len(ids))
    for off, m in ((-0.2, 2), (0.2, 3)):
        cov = {r["config_id"]: r["coverage"] for r in aggregates if r["team_size"] == m and r["avoidance"]}
        if cov:
            ax.bar(x + off, [cov.get(i, np.nan) for i in ids], width=0.4, label=f"{m} agents")
    ax.set_xticks(x, [str(i) for i in ids])
    ax.set_xlabel("configuration")
    ax.set_ylabel("area coverage [%]")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return Path(path)


def ablation_bars(rows: list[dict], path) -> Path:
    plt = _pyplot()
    sizes = sorted({r["team_size"] for r in rows})
    fig, axes = plt.subplots(1, len(sizes), figsize=(5 * len(sizes), 3.5), squeeze=False)
    for ax, m in zip(axes[0], sizes):
        sub = [r for r in rows if r["team_size"] == m]
        x = np.arange(len(sub))
        for off, key, label in ((-0.27, "nominal", "nominal"), (0.0, "reduced_noise", "3 dB"),
                                (0.27, "no_lobes", "no lobes")):
            ax.bar(x + off, [r[f"{key}_mean_flight_time"] for r in sub], width=0.27, label=label)
        ax.set_xticks(x, [str(r["config_id"]) for r in sub])
        ax.set_title(f"{m} agents")
        ax.set_xlabel("configuration")
        ax.set_ylabel("mean flight time [s]")
    axes[0][0].legend()
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return Path(path)


def circle_errors(report, path) -> Path:
    plt = _pyplot()
    fig, (a1, a2) = plt.subplots(2, 1, figsize=(7, 5), sharex=True)
    a1.plot(report.times, np.mean(np.abs(report.range_error), axis=0), label="filter")
    a1.plot(report.times, np.mean(np.abs(report.ld_range_error), axis=0), label="inverted log-distance", alpha=0.7)
    a1.set_ylabel("|range error| [m]")
    a1.legend()
    a2.plot(report.times, np.mean(np.abs(report.bearing_error), axis=0))
    a2.set_ylabel("|bearing error| [rad]")
    a2.set_xlabel("time [s]")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return Path(path)


def trajectory(result, side: float, path) -> Path:
    plt = _pyplot()
    fig, ax = plt.subplots(figsize=(4.5, 4.5))
    for k in range(result.trajectory.shape[1]):
        ax.plot(result.trajectory[:, k, 0], result.trajectory[:, k, 1], lw=0.8, label=f"agent {k}")
    ax.set_xlim(0, side)
    ax.set_ylim(0, side)
    ax.set_aspect("equal")
    ax.legend(fontsize=7)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return Path(path)

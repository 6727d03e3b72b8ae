"""File emission: aggregate CSV, per-trial JSON lines, long-format CSV."""

from __future__ import annotations

import csv
import io
import json
import math
import subprocess
from pathlib import Path

from .. import __version__


def build_id() -> str:
    """``git describe`` of the source tree, or the package version outside git."""
    try:
        out = subprocess.run(
            ["git", "describe", "--always", "--dirty", "--tags"],
            cwd=Path(__file__).resolve().parent, capture_output=True, text=True, timeout=10,
        )
        if out.returncode == 0 and out.stdout.strip():
            return out.stdout.strip()
    except (OSError, subprocess.SubprocessError):
        pass
    return f"commloc-{__version__}"


def _cell(v):
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return "nan" if math.isnan(v) else repr(v)
    if v is None:
        return ""
    return str(v)


def csv_text(rows: list[dict], columns: list[str] | None = None) -> str:
    if not rows:
        return ""
    columns = columns or list(rows[0])
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([_cell(r.get(c)) for c in columns])
    return buf.getvalue()


def write_csv(path, rows: list[dict], columns: list[str] | None = None) -> Path:
    p = Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    p.write_text(csv_text(rows, columns))
    return p


def write_jsonl(path, records, extra: dict | None = None) -> Path:
    p = Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    with p.open("w") as f:
        for r in records:
            f.write(json.dumps({**r, **(extra or {})}, sort_keys=True, allow_nan=True) + "\n")
    return p


LONG_METRICS = ("mean_flight_time", "sd_flight_time", "mean_flight_time_completed", "survival_fraction",
                "coverage", "border_fraction", "range_rmse", "bearing_rmse")


def long_rows(aggregates: list[dict], metrics=LONG_METRICS) -> list[dict]:
    """One row per (group, metric) for plotting tools."""
    keys = ("config_id", "team_size", "avoidance", "density", "master_seed", "build")
    return [{**{k: a[k] for k in keys}, "metric": m, "value": a[m]} for a in aggregates for m in metrics]


def write_sweep(out_dir, sweep, prefix: str = "sweep") -> list[Path]:
    out = Path(out_dir)
    extra = {"master_seed": sweep.master_seed, "build": sweep.build}
    return [
        write_csv(out / f"{prefix}_aggregates.csv", sweep.aggregates),
        write_csv(out / f"{prefix}_long.csv", long_rows(sweep.aggregates)),
        write_jsonl(out / f"{prefix}_trials.jsonl", sweep.records, extra),
    ]

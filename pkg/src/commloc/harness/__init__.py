"""Experiment harness: sweeps, ablation, the circular-flight check and file output."""

from .output import build_id, csv_text, long_rows, write_csv, write_jsonl, write_sweep
from .scenario import CircleParams, CircleReport, circle_track, scenario_circle
from .sweep import (
    ABLATION_VARIANTS,
    AblationResult,
    SweepResult,
    TrendReport,
    ZTest,
    ablation,
    ablation_variant,
    aggregate,
    area_coverage,
    correlation_report,
    run_sweep,
    trial_seeds,
    z_test,
)

__all__ = [
    "ABLATION_VARIANTS", "AblationResult", "CircleParams", "CircleReport", "SweepResult", "TrendReport",
    "ZTest", "ablation", "ablation_variant", "aggregate", "area_coverage", "build_id", "circle_track",
    "correlation_report", "csv_text", "long_rows", "run_sweep", "scenario_circle", "trial_seeds",
    "write_csv", "write_jsonl", "write_sweep", "z_test",
]

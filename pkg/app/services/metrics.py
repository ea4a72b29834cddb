"""Evacuation metrics and their tabular summaries."""

from typing import Iterable, List

import pandas as pd

from app.schemas.report import EvalReport

METRICS_COLUMNS = ["scenario", "seed", "policy", "total_frames", "N_l", "N_b", "w_l", "w_b", "r_util"]


def r_util(n_l: int, n_b: int, w_l: float, w_b: float) -> float:
    """
    Exit utilization: smaller over larger evacuees-per-width flux.

    0 when exactly one exit was unused, 1 when nobody evacuated.
    """
    if w_l <= 0 or w_b <= 0:
        raise ValueError("exit widths must be positive")
    if n_l == 0 and n_b == 0:
        return 1.0
    if n_l == 0 or n_b == 0:
        return 0.0
    flux_l, flux_b = n_l / w_l, n_b / w_b
    return min(flux_l, flux_b) / max(flux_l, flux_b)


def metrics_frame(reports: Iterable[EvalReport]) -> pd.DataFrame:
    """One row per evaluation run."""
    rows: List[dict] = [report.metrics_row() for report in reports]
    return pd.DataFrame(rows, columns=METRICS_COLUMNS)


def summarize(metrics: pd.DataFrame) -> pd.DataFrame:
    """Per (scenario, policy) means over seeds."""
    if metrics.empty:
        return pd.DataFrame(
            columns=["scenario", "policy", "runs", "total_frames", "N_l", "N_b", "r_util"]
        )
    grouped = metrics.groupby(["scenario", "policy"], sort=True)
    summary = grouped[["total_frames", "N_l", "N_b", "r_util"]].mean()
    summary.insert(0, "runs", grouped.size())
    return summary.reset_index()

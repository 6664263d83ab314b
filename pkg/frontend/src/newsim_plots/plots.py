"""Metric trajectory charts and latent-space scatter panels.

Two CSV schemas are consumed, both produced by the simulator:

merged metrics log (long format)::

    strategy,run,round,metric,value

latent projection (one file per round)::

    id,kind,in_loop,likes,c0,c1

All aggregation is done by pure functions returning plain arrays so the
numbers behind every figure can be inspected and tested without rendering.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass, field

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np
import pandas as pd

NEWS_COLOR = "tab:blue"
IN_LOOP_COLOR = "tab:green"
OUT_LOOP_COLOR = "tab:red"

BASE_MARKER = 6.0  # marker area for a zero-LIKE point
MARKER_PER_LIKE = 3.0  # extra area per LIKE, keeps size monotone in LIKEs


class PlotDataError(ValueError):
    """Input CSV is missing, empty, or lacks a requested column/metric."""


@dataclass
class FigureSpec:
    """What to draw from a merged metrics log and where to put it.

    metrics: which metric names to panel (one panel each).
    group_key: CSV column whose values become separate lines (e.g. strategy).
    out_path: output image file; the extension selects the format.
    n_cols: panel-grid width; rows grow as needed.
    """

    metrics: list
    group_key: str = "strategy"
    out_path: str = "metrics.png"
    n_cols: int = 3
    dpi: int = 120
    figsize_per_panel: tuple = (4.0, 3.0)


@dataclass
class MetricSeries:
    """Aggregated trajectory of one metric for one group of runs."""

    group: str
    rounds: np.ndarray
    mean: np.ndarray  # NaN where every run is missing the value
    std: np.ndarray  # population std across runs; 0 for a single run
    n_runs: int

    @property
    def band_lower(self):
        return self.mean - self.std

    @property
    def band_upper(self):
        return self.mean + self.std


def load_merged_metrics(path):
    """Read a long-format merged metrics CSV; empty cells become NaN."""
    if not os.path.exists(path):
        raise PlotDataError(f"no such metrics file: {path}")
    df = pd.read_csv(path, dtype={"value": float})
    required = {"run", "round", "metric", "value"}
    missing = required - set(df.columns)
    if missing:
        raise PlotDataError(f"{path}: missing columns: {', '.join(sorted(missing))}")
    if df.empty:
        raise PlotDataError(f"{path}: no metric rows")
    return df


def available_metrics(df):
    return sorted(df["metric"].unique())


def aggregate_metric(df, metric, group_key="strategy"):
    """Mean and spread of one metric across repeats, per group and round.

    Returns a list of MetricSeries ordered by group name. Rounds where a run
    has no value do not contribute to that round's statistics; rounds missing
    from every run yield NaN (breaking the plotted line there).
    """
    if group_key not in df.columns:
        raise PlotDataError(f"unknown group key {group_key!r}")
    if metric not in set(df["metric"]):
        raise PlotDataError(
            f"unknown metric {metric!r}; available: {', '.join(available_metrics(df))}"
        )
    sub = df[df["metric"] == metric]
    out = []
    for group, block in sub.groupby(group_key):
        rounds = np.sort(block["round"].unique())
        table = block.pivot_table(
            index="round", columns="run", values="value", aggfunc="first"
        ).reindex(rounds)
        values = table.to_numpy(dtype=float)
        present = ~np.isnan(values)
        counts = present.sum(axis=1)
        filled = np.where(present, values, 0.0)
        mean = np.full(len(values), np.nan)
        std = np.full(len(values), np.nan)
        has = counts > 0
        mean[has] = filled[has].sum(axis=1) / counts[has]
        sq = np.where(present, (values - mean[:, None]) ** 2, 0.0)
        std[has] = np.sqrt(sq[has].sum(axis=1) / counts[has])
        out.append(
            MetricSeries(
                group=str(group),
                rounds=rounds.astype(int),
                mean=mean,
                std=std,
                n_runs=values.shape[1],
            )
        )
    return out


def plot_metrics(merged_csv, spec):
    """Render one panel per requested metric: mean line per group, ±1 std band.

    Returns {"path": written image path, "series": {metric: [MetricSeries]}}.
    """
    df = load_merged_metrics(merged_csv)
    if not spec.metrics:
        raise PlotDataError("FigureSpec.metrics is empty")
    series_by_metric = {
        m: aggregate_metric(df, m, spec.group_key) for m in spec.metrics
    }
    n = len(spec.metrics)
    n_cols = min(spec.n_cols, n)
    n_rows = math.ceil(n / n_cols)
    fig, axes = plt.subplots(
        n_rows,
        n_cols,
        figsize=(spec.figsize_per_panel[0] * n_cols, spec.figsize_per_panel[1] * n_rows),
        squeeze=False,
    )
    for k, metric in enumerate(spec.metrics):
        ax = axes[k // n_cols][k % n_cols]
        for series in series_by_metric[metric]:
            (line,) = ax.plot(series.rounds, series.mean, label=series.group)
            ax.fill_between(
                series.rounds,
                series.band_lower,
                series.band_upper,
                alpha=0.25,
                color=line.get_color(),
                linewidth=0,
            )
        ax.set_title(metric)
        ax.set_xlabel("round")
        ax.legend(fontsize="small")
    for k in range(n, n_rows * n_cols):
        axes[k // n_cols][k % n_cols].axis("off")
    fig.tight_layout()
    _save(fig, spec.out_path, spec.dpi)
    plt.close(fig)
    return {"path": spec.out_path, "series": series_by_metric}


def load_projection(path):
    """Read one round's latent projection CSV."""
    if not os.path.exists(path):
        raise PlotDataError(f"no such projection file: {path}")
    df = pd.read_csv(path)
    required = {"id", "kind", "in_loop", "likes", "c0", "c1"}
    missing = required - set(df.columns)
    if missing:
        raise PlotDataError(f"{path}: missing columns: {', '.join(sorted(missing))}")
    if df.empty:
        raise PlotDataError(f"{path}: no rows")
    return df


def scatter_style(df):
    """Colors and marker sizes for one projection frame.

    News is blue; users are green once they hold at least one LIKE and red
    otherwise. Marker area grows linearly with the LIKE count.
    """
    kinds = df["kind"].to_numpy()
    in_loop = df["in_loop"].to_numpy().astype(bool)
    colors = np.where(
        kinds == "news", NEWS_COLOR, np.where(in_loop, IN_LOOP_COLOR, OUT_LOOP_COLOR)
    )
    sizes = BASE_MARKER + MARKER_PER_LIKE * df["likes"].to_numpy(dtype=float)
    return colors, sizes


def plot_latent(projection_paths, rounds, out_path, dpi=120, n_cols=3):
    """Scatter-panel grid of the latent space, one panel per requested round.

    `projection_paths` maps round -> CSV path (a plain dict, or anything with
    __getitem__). Returns {"path": ..., "panels": {round: (colors, sizes)}}.
    """
    if not rounds:
        raise PlotDataError("no rounds requested")
    frames = {}
    for r in rounds:
        try:
            path = projection_paths[r]
        except KeyError:
            raise PlotDataError(f"no projection path for round {r}") from None
        frames[r] = load_projection(path)
    n = len(rounds)
    n_cols = min(n_cols, n)
    n_rows = math.ceil(n / n_cols)
    fig, axes = plt.subplots(
        n_rows, n_cols, figsize=(4.0 * n_cols, 4.0 * n_rows), squeeze=False
    )
    panels = {}
    for k, r in enumerate(rounds):
        ax = axes[k // n_cols][k % n_cols]
        df = frames[r]
        colors, sizes = scatter_style(df)
        panels[r] = (colors, sizes)
        ax.scatter(df["c0"], df["c1"], c=colors, s=sizes, linewidths=0, alpha=0.7)
        ax.set_title(f"round {r}")
        ax.set_xticks([])
        ax.set_yticks([])
    for k in range(n, n_rows * n_cols):
        axes[k // n_cols][k % n_cols].axis("off")
    fig.tight_layout()
    _save(fig, out_path, dpi)
    plt.close(fig)
    return {"path": out_path, "panels": panels}


def _save(fig, path, dpi):
    """Write the figure without embedded timestamps, for reproducible bytes."""
    metadata = None
    ext = os.path.splitext(path)[1].lower()
    if ext == ".svg":
        metadata = {"Date": None}
    fig.savefig(path, dpi=dpi, metadata=metadata)

"""Figure generation for simulation experiment logs.

Consumes the simulator's exported CSVs (the long-format merged metrics log and
the per-round latent projection files) and renders metric-vs-round line charts
with variance shading plus latent-space scatter panels.
"""

from .plots import (
    FigureSpec,
    MetricSeries,
    PlotDataError,
    aggregate_metric,
    load_merged_metrics,
    load_projection,
    plot_latent,
    plot_metrics,
    scatter_style,
)

__version__ = "0.1.0"

__all__ = [
    "FigureSpec",
    "MetricSeries",
    "PlotDataError",
    "aggregate_metric",
    "load_merged_metrics",
    "load_projection",
    "plot_latent",
    "plot_metrics",
    "scatter_style",
    "__version__",
]

"""Cumulative-return figures written next to the CSV/JSON reports."""

from __future__ import annotations

import datetime as dt
from pathlib import Path
from typing import Mapping, Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.dates as mdates  # noqa: E402
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .evaluation import cumulative_return_series  # noqa: E402

STYLE = {
    "figure.figsize": (7.0, 3.6),
    "axes.grid": True,
    "grid.alpha": 0.3,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "font.size": 9,
    "legend.fontsize": 8,
    "legend.frameon": False,
}


def _dates(timestamps: Sequence[int]):
    return [dt.datetime.fromtimestamp(int(t), tz=dt.timezone.utc) for t in timestamps]


def plot_cumulative_returns(
    timestamps: Sequence[int],
    series: Mapping[str, Sequence[float]],
    path,
    title: str = "",
) -> Path:
    """Plot each value series as cumulative return (percent) against UTC time."""
    path = Path(path)
    x = _dates(timestamps)
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        for label, values in series.items():
            if values is None:
                continue
            ax.plot(x, 100 * cumulative_return_series(values), lw=1.2, label=label)
        ax.axhline(0.0, color="0.5", lw=0.6)
        ax.set_ylabel("cumulative return (%)")
        ax.xaxis.set_major_formatter(mdates.DateFormatter("%m-%d %H:%M"))
        fig.autofmt_xdate()
        if title:
            ax.set_title(title)
        ax.legend(loc="best")
        fig.tight_layout()
        fig.savefig(path, dpi=120, metadata={"Software": None})
        plt.close(fig)
    return path


def plot_report(report, path, title: str = "") -> Path:
    series = {report.label: report.values}
    if report.baseline_values is not None:
        series[report.baseline_label] = report.baseline_values
    return plot_cumulative_returns(report.timestamps, series, path, title)


def plot_learning_curve(curves: Mapping[str, Sequence[float]], path) -> Path:
    path = Path(path)
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        for label, curve in curves.items():
            ax.plot(np.arange(1, len(curve) + 1), curve, marker="o", ms=2, lw=1, label=label)
        ax.set_xlabel("update")
        ax.set_ylabel("mean episode return")
        ax.legend(loc="best")
        fig.tight_layout()
        fig.savefig(path, dpi=120, metadata={"Software": None})
        plt.close(fig)
    return path

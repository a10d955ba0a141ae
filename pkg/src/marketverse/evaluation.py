"""Performance metrics and reports.

All fractions stay fractions (0.05 is 5%); percent formatting happens only
in :func:`render_table`. Sharpe is ``None`` when return volatility is zero.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, asdict
from typing import Mapping, Sequence

import numpy as np

from .errors import DataError


def period_returns(values: Sequence[float]) -> np.ndarray:
    v = np.asarray(values, dtype=np.float64)
    if v.size < 2:
        raise DataError("need at least two values for returns")
    if np.any(~(v > 0)):
        raise DataError("portfolio values must be > 0")
    return v[1:] / v[:-1] - 1.0


def max_drawdown(values: Sequence[float]) -> float:
    v = np.asarray(values, dtype=np.float64)
    return float(np.min(v / np.maximum.accumulate(v) - 1.0))


def cumulative_return_series(values: Sequence[float]) -> np.ndarray:
    v = np.asarray(values, dtype=np.float64)
    if v.size == 0 or not v[0] > 0:
        raise DataError("cumulative returns need a non-empty series with a positive first value")
    out = v / v[0] - 1.0
    out[0] = 0.0
    return out


@dataclass(frozen=True)
class MetricBlock:
    cumulative_return: float
    annual_return: float
    annual_volatility: float
    sharpe_ratio: float | None
    max_drawdown: float
    final_value: float
    n_periods: int

    def to_dict(self) -> dict:
        return asdict(self)


def compute_metrics(values: Sequence[float], periods_per_year: float) -> MetricBlock:
    """Five headline metrics for a value series sampled ``periods_per_year`` times a year.

    Volatility uses the sample standard deviation of period returns; Sharpe
    assumes a zero risk-free rate.
    """
    v = np.asarray(values, dtype=np.float64)
    r = period_returns(v)
    ratio = v[-1] / v[0]
    n = len(r)
    with np.errstate(over="ignore"):
        annual = float(np.power(ratio, periods_per_year / n) - 1.0)
    if n >= 2:
        sd = float(np.std(r, ddof=1))
    else:
        sd = 0.0
    sharpe = None if sd == 0.0 else float(np.mean(r) / sd * math.sqrt(periods_per_year))
    return MetricBlock(
        cumulative_return=float(ratio - 1.0),
        annual_return=annual,
        annual_volatility=sd * math.sqrt(periods_per_year),
        sharpe_ratio=sharpe,
        max_drawdown=max_drawdown(v),
        final_value=float(v[-1]),
        n_periods=n,
    )


@dataclass
class PerformanceReport:
    strategy: MetricBlock
    baseline: MetricBlock | None
    periods_per_year: float
    timestamps: np.ndarray
    values: np.ndarray
    baseline_values: np.ndarray | None = None
    label: str = "strategy"
    baseline_label: str = "baseline"

    # flat accessors for the strategy block
    @property
    def cumulative_return(self) -> float:
        return self.strategy.cumulative_return

    @property
    def annual_return(self) -> float:
        return self.strategy.annual_return

    @property
    def annual_volatility(self) -> float:
        return self.strategy.annual_volatility

    @property
    def sharpe_ratio(self) -> float | None:
        return self.strategy.sharpe_ratio

    @property
    def max_drawdown(self) -> float:
        return self.strategy.max_drawdown

    def to_dict(self) -> dict:
        return {
            "label": self.label,
            "baseline_label": self.baseline_label,
            "periods_per_year": self.periods_per_year,
            "strategy": self.strategy.to_dict(),
            "baseline": None if self.baseline is None else self.baseline.to_dict(),
            "timestamps": [int(t) for t in self.timestamps],
            "values": [float(x) for x in self.values],
            "baseline_values": None if self.baseline_values is None else [float(x) for x in self.baseline_values],
        }

    def to_json(self, path=None, **kw) -> str:
        text = json.dumps(self.to_dict(), indent=kw.pop("indent", 2), **kw)
        if path is not None:
            with open(path, "w") as fh:
                fh.write(text)
        return text

    def write_cumret_csv(self, path) -> None:
        strat = cumulative_return_series(self.values)
        base = None if self.baseline_values is None else cumulative_return_series(self.baseline_values)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["timestamp", "strategy_cumret", "baseline_cumret"])
            for i, t in enumerate(self.timestamps):
                w.writerow([int(t), repr(float(strat[i])), "" if base is None else repr(float(base[i]))])


def build_report(
    trajectory,
    baseline_values: Sequence[float] | None,
    periods_per_year: float,
    *,
    baseline_timestamps: Sequence[int] | None = None,
    label: str = "strategy",
    baseline_label: str = "baseline",
) -> PerformanceReport:
    """Side-by-side metrics for a trajectory (or bare value series) and a baseline.

    ``trajectory`` may be a :class:`~marketverse.rollout.Trajectory` or a
    ``(timestamps, values)`` pair.
    """
    if hasattr(trajectory, "values") and hasattr(trajectory, "timestamps"):
        ts, vals = trajectory.timestamps, trajectory.values
    else:
        ts, vals = trajectory
    ts = np.asarray(ts, dtype=np.int64)
    vals = np.asarray(vals, dtype=np.float64)
    if len(ts) != len(vals):
        raise DataError("timestamps and values differ in length")
    base = None
    base_block = None
    if baseline_values is not None:
        base = np.asarray(baseline_values, dtype=np.float64)
        if len(base) != len(vals):
            raise DataError(f"baseline has {len(base)} points, strategy has {len(vals)}")
        if baseline_timestamps is not None and not np.array_equal(np.asarray(baseline_timestamps), ts):
            raise DataError("baseline timestamps do not match strategy timestamps")
        base_block = compute_metrics(base, periods_per_year)
    return PerformanceReport(
        strategy=compute_metrics(vals, periods_per_year),
        baseline=base_block,
        periods_per_year=float(periods_per_year),
        timestamps=ts,
        values=vals,
        baseline_values=base,
        label=label,
        baseline_label=baseline_label,
    )


_ROWS = (
    ("Cumul. return", "cumulative_return", True),
    ("Annual return", "annual_return", True),
    ("Annual volatility", "annual_volatility", True),
    ("Sharpe ratio", "sharpe_ratio", False),
    ("Max drawdown", "max_drawdown", True),
)


def _fmt(value, pct: bool) -> str:
    if value is None:
        return "n/a"
    if pct:
        return f"{value * 100:.3f}%"
    return f"{value:.3f}"


def render_table(columns: Mapping[str, tuple]) -> str:
    """Text table with one ``backtest / paper-trade`` cell per column.

    ``columns`` maps a header to a tuple of metric blocks (or anything with
    the metric attributes); ``None`` entries are skipped.
    """
    headers = [""] + list(columns)
    rows = [headers]
    for title, attr, pct in _ROWS:
        row = [title]
        for blocks in columns.values():
            cells = [_fmt(getattr(b, attr), pct) for b in blocks if b is not None]
            row.append(" / ".join(cells))
        rows.append(row)
    widths = [max(len(r[i]) for r in rows) for i in range(len(headers))]
    lines = []
    for k, r in enumerate(rows):
        lines.append("| " + " | ".join(c.ljust(w) for c, w in zip(r, widths)) + " |")
        if k == 0:
            lines.append("|" + "|".join("-" * (w + 2) for w in widths) + "|")
    return "\n".join(lines)

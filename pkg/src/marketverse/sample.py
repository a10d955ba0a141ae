"""Deterministic synthetic OHLCV data and the bundled sample run config."""

from __future__ import annotations

import json
import shutil
from importlib import resources
from pathlib import Path
from typing import Sequence

import numpy as np

from .data import Bar, to_epoch, write_csv

SAMPLE_CSV = "sample_ohlcv.csv"
SAMPLE_CONFIG = "sample_config.json"


def synthetic_bars(
    symbols: Sequence[str] = ("AAA", "BBB", "CCC"),
    start: str = "2021-06-01",
    n_bars: int = 5184,
    interval: int = 300,
    seed: int = 7,
    gap_fraction: float = 0.01,
    drift: Sequence[float] | None = None,
    vol: float = 0.002,
    start_price: float = 100.0,
) -> list[Bar]:
    """Correlated log-normal price paths with a few missing bars per symbol.

    The first and last bar of every symbol are always present so the
    aligned grid spans the full range.
    """
    rng = np.random.default_rng(seed)
    n = len(symbols)
    drift = np.zeros(n) if drift is None else np.asarray(drift, dtype=np.float64)
    corr = 0.3 * np.ones((n, n)) + 0.7 * np.eye(n)
    chol = np.linalg.cholesky(corr)
    shocks = rng.standard_normal((n_bars, n)) @ chol.T
    log_close = np.log(start_price) + np.cumsum(drift + vol * shocks, axis=0)
    close = np.exp(log_close)
    prev = np.vstack([close[:1], close[:-1]])
    spread = np.abs(rng.standard_normal((n_bars, n, 2))) * vol * close[..., None]
    high = np.maximum(prev, close) + spread[..., 0]
    low = np.minimum(prev, close) - spread[..., 1]
    volume = np.round(rng.lognormal(8.0, 0.5, (n_bars, n)))
    missing = rng.random((n_bars, n)) < gap_fraction
    missing[0] = missing[-1] = False
    t0 = to_epoch(start)
    bars = []
    for i in range(n_bars):
        ts = t0 + i * interval
        for j, sym in enumerate(symbols):
            if missing[i, j]:
                continue
            bars.append(Bar(ts, sym, round(float(prev[i, j]), 6), round(float(high[i, j]), 6),
                            round(float(low[i, j]), 6), round(float(close[i, j]), 6), float(volume[i, j])))
    return bars


def sample_config() -> dict:
    return json.loads(resources.files(__package__).joinpath("resources", SAMPLE_CONFIG).read_text())


def install_sample(directory) -> Path:
    """Copy the bundled CSV and config into ``directory``; returns the config path."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    res = resources.files(__package__).joinpath("resources")
    for name in (SAMPLE_CSV, SAMPLE_CONFIG):
        with resources.as_file(res.joinpath(name)) as src:
            shutil.copyfile(src, directory / name)
    return directory / SAMPLE_CONFIG


def regenerate(directory) -> Path:
    """Rewrite the sample CSV; the bundled copy is produced by this call."""
    path = Path(directory) / SAMPLE_CSV
    write_csv(synthetic_bars(), path)
    return path

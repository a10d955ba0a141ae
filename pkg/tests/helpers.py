"""Small builders shared by the test modules."""

from __future__ import annotations

import numpy as np

from marketverse.data import BASE_FEATURES, MarketPanel

T0 = 1622505600  # 2021-06-01 00:00 UTC


def make_panel(close, interval=300, t0=T0, symbols=None, extra=None) -> MarketPanel:
    """Panel whose OHLC all equal ``close`` (T x N) and volume is 1."""
    close = np.asarray(close, dtype=np.float64)
    if close.ndim == 1:
        close = close[:, None]
    T, N = close.shape
    vals = np.stack([close, close, close, close, np.ones_like(close)], axis=-1)
    names = list(BASE_FEATURES)
    if extra:
        for name, col in extra.items():
            vals = np.concatenate([vals, np.broadcast_to(np.asarray(col, float).reshape(T, -1), (T, N))[..., None]],
                                  axis=-1)
            names.append(name)
    return MarketPanel(
        timestamps=t0 + interval * np.arange(T),
        symbols=tuple(symbols or [f"S{j}" for j in range(N)]),
        feature_names=tuple(names),
        values=vals,
        interval_seconds=interval,
        periods_per_year=365 * 86400 / interval,
    )


def random_walk(rng, T, N, vol=0.01, drift=0.0, start=100.0):
    steps = drift + vol * rng.standard_normal((T - 1, N))
    return start * np.exp(np.vstack([np.zeros((1, N)), np.cumsum(steps, axis=0)]))

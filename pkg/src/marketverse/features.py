"""Technical indicators and the turbulence index, appended as panel columns."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .data import MarketPanel
from .errors import ConfigError, DataError

INDICATOR_KINDS = ("SMA", "EMA", "MACD", "RSI", "BOLL_UPPER", "BOLL_LOWER", "ROLLING_VOL")
TURBULENCE_FEATURE = "turbulence"


@dataclass(frozen=True)
class IndicatorSpec:
    kind: str
    window: int
    secondary_window: int | None = None
    signal_window: int | None = None

    def __post_init__(self):
        kind = self.kind.upper()
        object.__setattr__(self, "kind", kind)
        if kind not in INDICATOR_KINDS:
            raise ConfigError(f"unknown indicator kind {self.kind!r}")
        if self.window < 1:
            raise ConfigError(f"{kind}: window must be >= 1")
        if kind == "MACD":
            if self.secondary_window is None or self.signal_window is None:
                raise ConfigError("MACD needs secondary_window and signal_window")
            if not self.window < self.secondary_window:
                raise ConfigError("MACD: fast window must be shorter than slow window")
            if self.signal_window < 1:
                raise ConfigError("MACD: signal_window must be >= 1")

    @property
    def name(self) -> str:
        if self.kind == "MACD":
            return f"macd_{self.window}_{self.secondary_window}_{self.signal_window}"
        return f"{self.kind.lower()}_{self.window}"

    @property
    def span(self) -> int:
        """Rows of history the indicator needs before it is defined."""
        return self.secondary_window if self.kind == "MACD" else self.window

    @classmethod
    def from_dict(cls, d: dict) -> "IndicatorSpec":
        return cls(d["kind"], int(d["window"]), d.get("secondary_window"), d.get("signal_window"))

    def to_dict(self) -> dict:
        d = {"kind": self.kind, "window": self.window}
        if self.kind == "MACD":
            d |= {"secondary_window": self.secondary_window, "signal_window": self.signal_window}
        return d


DEFAULT_INDICATORS = (
    IndicatorSpec("SMA", 20),
    IndicatorSpec("EMA", 12),
    IndicatorSpec("MACD", 12, 26, 9),
    IndicatorSpec("RSI", 14),
    IndicatorSpec("BOLL_UPPER", 20),
    IndicatorSpec("BOLL_LOWER", 20),
    IndicatorSpec("ROLLING_VOL", 20),
)


@dataclass(frozen=True)
class TurbulenceConfig:
    lookback: int = 252
    # None: 1e-8 * trace(cov) / N, recomputed for every window
    ridge_epsilon: float | None = None

    def __post_init__(self):
        if self.lookback < 1:
            raise ConfigError("lookback must be positive")
        if self.ridge_epsilon is not None and not self.ridge_epsilon > 0:
            raise ConfigError("ridge_epsilon must be positive")


# ---------------------------------------------------------------- indicators


def _backfill_head(col: np.ndarray, first: int) -> np.ndarray:
    col[:first] = col[first]
    return col


def sma(close: np.ndarray, window: int) -> np.ndarray:
    out = np.empty_like(close)
    out[window - 1:] = sliding_window_view(close, window, axis=0).mean(axis=-1)
    return _backfill_head(out, window - 1)


def rolling_std(x: np.ndarray, window: int) -> np.ndarray:
    """Population std over trailing windows; head rows hold the first full window."""
    out = np.empty_like(x)
    out[window - 1:] = sliding_window_view(x, window, axis=0).std(axis=-1)
    return _backfill_head(out, window - 1)


def ema(close: np.ndarray, window: int) -> np.ndarray:
    alpha = 2.0 / (window + 1)
    out = np.empty_like(close)
    out[0] = close[0]
    for t in range(1, len(close)):
        out[t] = alpha * close[t] + (1 - alpha) * out[t - 1]
    return out


def rsi(close: np.ndarray, window: int) -> np.ndarray:
    """Wilder RSI. Flat history (no gains, no losses) reads as 50."""
    delta = np.diff(close, axis=0)
    gain = np.where(delta > 0, delta, 0.0)
    loss = np.where(delta < 0, -delta, 0.0)
    T = close.shape[0]
    avg_gain = np.empty_like(close)
    avg_loss = np.empty_like(close)
    avg_gain[window] = gain[:window].mean(axis=0)
    avg_loss[window] = loss[:window].mean(axis=0)
    for t in range(window + 1, T):
        avg_gain[t] = (avg_gain[t - 1] * (window - 1) + gain[t - 1]) / window
        avg_loss[t] = (avg_loss[t - 1] * (window - 1) + loss[t - 1]) / window
    g, l = avg_gain[window:], avg_loss[window:]
    with np.errstate(divide="ignore", invalid="ignore"):
        val = 100.0 - 100.0 / (1.0 + g / l)
    val = np.where(l == 0, 100.0, val)
    val = np.where((g == 0) & (l > 0), 0.0, val)
    val = np.where((g == 0) & (l == 0), 50.0, val)
    out = np.empty_like(close)
    out[window:] = val
    return _backfill_head(out, window)


def simple_returns(close: np.ndarray) -> np.ndarray:
    return close[1:] / close[:-1] - 1.0


def compute_indicator(close: np.ndarray, spec: IndicatorSpec) -> np.ndarray:
    """Evaluate one indicator on a ``(T, N)`` close matrix."""
    w = spec.window
    if spec.kind == "SMA":
        return sma(close, w)
    if spec.kind == "EMA":
        return ema(close, w)
    if spec.kind == "MACD":
        return ema(close, w) - ema(close, spec.secondary_window)
    if spec.kind == "RSI":
        return rsi(close, w)
    if spec.kind in ("BOLL_UPPER", "BOLL_LOWER"):
        sign = 1.0 if spec.kind == "BOLL_UPPER" else -1.0
        return sma(close, w) + sign * 2.0 * rolling_std(close, w)
    if spec.kind == "ROLLING_VOL":
        out = np.empty_like(close)
        out[1:] = rolling_std(simple_returns(close), w)
        out[:w] = out[w]
        return out
    raise ConfigError(f"unknown indicator kind {spec.kind!r}")


def add_indicators(panel: MarketPanel, specs: Sequence[IndicatorSpec] | None = None) -> MarketPanel:
    """Append one ``(T, N)`` column per spec, computed from close prices.

    Rows before an indicator is first defined repeat its first defined
    value so the panel never holds NaN.
    """
    specs = list(DEFAULT_INDICATORS if specs is None else specs)
    T = panel.n_steps
    for s in specs:
        needed = s.span + (1 if s.kind in ("RSI", "ROLLING_VOL") else 0)
        if needed > T or s.window >= T:
            raise DataError(f"{s.name}: window {s.span} too long for panel of {T} rows")
    close = np.array(panel.close)
    columns = [compute_indicator(close, s) for s in specs]
    return panel.with_features([s.name for s in specs], columns)


# ---------------------------------------------------------------- turbulence


def turbulence_score(y: np.ndarray, mu: np.ndarray, regularized_cov: np.ndarray) -> float:
    """``(y - mu)' C^-1 (y - mu)`` for an already-regularized covariance ``C``."""
    dev = np.asarray(y, dtype=float) - np.asarray(mu, dtype=float)
    return max(float(dev @ np.linalg.solve(regularized_cov, dev)), 0.0)


def turbulence(panel: MarketPanel, cfg: TurbulenceConfig | None = None) -> np.ndarray:
    """Mahalanobis distance of each period's returns from trailing history.

    For row ``t`` the history is the ``lookback`` returns ending at ``t-1``.
    Row 0 has no return, so the first scored row is ``lookback + 1``; all
    earlier rows are 0. Symbols are processed in sorted-name order, which
    makes the output independent of panel column order.
    """
    cfg = cfg or TurbulenceConfig()
    n = panel.n_symbols
    L = cfg.lookback
    if L < n + 2:
        raise ConfigError(f"turbulence lookback {L} too small for {n} symbols (need >= {n + 2})")
    T = panel.n_steps
    if T <= L:
        raise DataError(f"panel has {T} rows; turbulence lookback {L} needs more")

    order = np.argsort(np.array(panel.symbols), kind="stable")
    close = np.ascontiguousarray(panel.close[:, order])
    rets = np.zeros_like(close)
    rets[1:] = simple_returns(close)
    out = np.zeros(T)
    eye = np.eye(n)
    for t in range(L + 1, T):
        hist = np.array(rets[t - L:t])
        mu = hist.mean(axis=0)
        centered = hist - mu
        cov = centered.T @ centered / (L - 1)
        eps = cfg.ridge_epsilon
        if eps is None:
            tr = np.trace(cov)
            eps = 1e-8 * tr / n if tr > 0 else 1e-12
        out[t] = turbulence_score(rets[t], mu, cov + eps * eye)
    return out


def add_turbulence(panel: MarketPanel, cfg: TurbulenceConfig | None = None) -> MarketPanel:
    series = turbulence(panel, cfg)
    column = np.repeat(series[:, None], panel.n_symbols, axis=1)
    return panel.with_features([TURBULENCE_FEATURE], [column])

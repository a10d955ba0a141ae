"""Replay-driven trading environments.

Two task families share one observation layout::

    [cash, holdings(N), close(N), features(N*K, symbol-major), turbulence]

``StockTradingEnv`` trades integer shares from intents in [-1, 1];
``PortfolioAllocationEnv`` rebalances to softmax weights of logits.
The module-level ``reset`` / ``step`` / ``step_allocation`` functions are
the pure core; the classes cache panel views and hold the mutable state.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, asdict
from typing import Sequence

import numpy as np

from .data import BASE_FEATURES, MarketPanel
from .errors import ConfigError, EnvError
from .features import TURBULENCE_FEATURE


@dataclass(frozen=True)
class CostModel:
    kind: str = "per-share-percentage"  # or "flat-fee"
    flat_fee: float = 0.0
    rate: float = 0.001

    def __post_init__(self):
        if self.kind not in ("flat-fee", "per-share-percentage"):
            raise ConfigError(f"unknown cost model {self.kind!r}")
        if self.flat_fee < 0:
            raise ConfigError("flat_fee must be >= 0")
        if not 0 <= self.rate < 1:
            raise ConfigError("rate must lie in [0, 1)")

    def cost(self, shares: float, price: float) -> float:
        if shares <= 0:
            return 0.0
        if self.kind == "flat-fee":
            return self.flat_fee
        return self.rate * shares * price


@dataclass(frozen=True)
class EnvConfig:
    initial_cash: float = 1_000_000.0
    hmax: int = 100
    cost_model: CostModel = field(default_factory=CostModel)
    bid_ask_spread: float = 0.0
    turbulence_threshold: float | None = None
    reward_scaling: float = 1.0
    start_step: int = 0
    # indicator columns exposed in observations; None means every
    # non-base, non-turbulence feature of the panel
    observation_features: tuple[str, ...] | None = None
    # share of each holding sold per turbulent step (1.0 = liquidate at once)
    liquidation_fraction: float = 1.0

    def __post_init__(self):
        if not self.initial_cash > 0:
            raise ConfigError("initial_cash must be > 0")
        if int(self.hmax) != self.hmax or self.hmax < 1:
            raise ConfigError("hmax must be a positive integer")
        if self.bid_ask_spread < 0 or self.bid_ask_spread >= 1:
            raise ConfigError("bid_ask_spread must lie in [0, 1)")
        if self.turbulence_threshold is not None and self.turbulence_threshold < 0:
            raise ConfigError("turbulence_threshold must be >= 0 or None")
        if not self.reward_scaling > 0:
            raise ConfigError("reward_scaling must be > 0")
        if self.start_step < 0:
            raise ConfigError("start_step must be >= 0")
        if not 0 < self.liquidation_fraction <= 1:
            raise ConfigError("liquidation_fraction must lie in (0, 1]")
        if isinstance(self.cost_model, dict):
            object.__setattr__(self, "cost_model", CostModel(**self.cost_model))
        if self.observation_features is not None:
            object.__setattr__(self, "observation_features", tuple(self.observation_features))

    @classmethod
    def from_dict(cls, d: dict) -> "EnvConfig":
        d = dict(d)
        if "cost_model" in d:
            d["cost_model"] = CostModel(**d["cost_model"])
        return cls(**d)

    def to_dict(self) -> dict:
        d = asdict(self)
        if d["observation_features"] is not None:
            d["observation_features"] = list(d["observation_features"])
        return d


@dataclass
class EnvState:
    step_index: int
    cash: float
    holdings: np.ndarray
    done: bool = False

    def copy(self) -> "EnvState":
        return EnvState(self.step_index, self.cash, self.holdings.copy(), self.done)


@dataclass(frozen=True)
class ObservationLayout:
    n_assets: int
    n_features: int

    @property
    def dim(self) -> int:
        return 2 + 2 * self.n_assets + self.n_features * self.n_assets

    @property
    def cash(self) -> int:
        return 0

    @property
    def holdings(self) -> slice:
        return slice(1, 1 + self.n_assets)

    @property
    def close(self) -> slice:
        return slice(1 + self.n_assets, 1 + 2 * self.n_assets)

    @property
    def features(self) -> slice:
        return slice(1 + 2 * self.n_assets, self.dim - 1)

    @property
    def turbulence(self) -> int:
        return self.dim - 1


# ---------------------------------------------------------------- helpers


def _observation_features(panel: MarketPanel, cfg: EnvConfig) -> list[int]:
    if cfg.observation_features is None:
        names = [f for f in panel.feature_names if f not in BASE_FEATURES and f != TURBULENCE_FEATURE]
    else:
        names = list(cfg.observation_features)
    return [panel.feature_index(n) for n in names]


def _turbulence_series(panel: MarketPanel) -> np.ndarray:
    if TURBULENCE_FEATURE in panel.feature_names:
        return panel.feature(TURBULENCE_FEATURE)[:, 0]
    return np.zeros(panel.n_steps)


def layout_for(panel: MarketPanel, cfg: EnvConfig) -> ObservationLayout:
    return ObservationLayout(panel.n_symbols, len(_observation_features(panel, cfg)))


def observe(state: EnvState, panel: MarketPanel, cfg: EnvConfig) -> np.ndarray:
    t = state.step_index
    feats = panel.values[t][:, _observation_features(panel, cfg)].ravel()
    turb = _turbulence_series(panel)[t]
    return np.concatenate(([state.cash], state.holdings, panel.close[t], feats, [turb])).astype(np.float64)


def portfolio_value(state: EnvState, panel: MarketPanel) -> float:
    return float(state.cash + state.holdings @ panel.close[state.step_index])


def softmax(logits: np.ndarray) -> np.ndarray:
    z = np.asarray(logits, dtype=np.float64)
    z = z - z.max()
    e = np.exp(z)
    return e / e.sum()


def _check_start(panel: MarketPanel, cfg: EnvConfig) -> None:
    if panel.n_steps - cfg.start_step < 2:
        raise EnvError(
            f"panel too short: {panel.n_steps} rows with start_step {cfg.start_step}; need >= 2 tradable rows"
        )


# ---------------------------------------------------------------- pure core


def reset(panel: MarketPanel, cfg: EnvConfig, seed: int = 0, *, fractional: bool = False) -> tuple[EnvState, np.ndarray]:
    """Fresh state at ``cfg.start_step``.

    Dynamics are deterministic replay, so ``seed`` does not influence the
    episode; it is accepted so every environment honors one reset contract.
    """
    _check_start(panel, cfg)
    dtype = np.float64 if fractional else np.int64
    state = EnvState(cfg.start_step, float(cfg.initial_cash), np.zeros(panel.n_symbols, dtype=dtype))
    return state, observe(state, panel, cfg)


def _trade_stock(cash, holdings, price, delta, turbulent, cfg):
    """Execute share deltas at ``price``; mutates ``holdings`` in place."""
    s = cfg.bid_ask_spread
    cm = cfg.cost_model
    n = len(holdings)
    executed = np.zeros(n, dtype=np.int64)
    costs = 0.0
    slippage = 0.0

    if turbulent:
        frac = cfg.liquidation_fraction
        delta = np.array([-math.ceil(frac * h) if h > 0 else 0 for h in holdings], dtype=np.int64)

    for i in range(n):
        d = delta[i]
        if d >= 0 or holdings[i] == 0:
            continue
        q = min(-int(d), int(holdings[i]))
        px = price[i] * (1.0 - s)
        fee = cm.cost(q, px)
        gross = q * px
        if cash + gross - fee < 0:
            continue
        cash = cash + gross - fee
        holdings[i] -= q
        executed[i] = -q
        costs += fee
        slippage += q * price[i] * s

    for i in range(n):
        d = delta[i]
        if d <= 0:
            continue
        px = price[i] * (1.0 + s)
        if cm.kind == "flat-fee":
            budget = cash - cm.flat_fee
            afford = math.floor(budget / px) if budget > 0 else 0
        else:
            afford = math.floor(cash / (px * (1.0 + cm.rate)))
        q = min(int(d), afford)
        while q > 0 and q * px + cm.cost(q, px) > cash:
            q -= 1
        if q <= 0:
            continue
        fee = cm.cost(q, px)
        cash = cash - (q * px + fee)
        holdings[i] += q
        executed[i] = q
        costs += fee
        slippage += q * price[i] * s

    return float(cash), executed, float(costs), float(slippage)


def step(state: EnvState, action: Sequence[float], panel: MarketPanel, cfg: EnvConfig):
    """Advance the share-trading MDP by one row.

    Order of execution: clip intents and scale by ``hmax``; apply the
    turbulence override; sells at ``close*(1-spread)``; buys in symbol
    order at ``close*(1+spread)``, each cut to what cash affords; move to
    the next row. Reward is the scaled change in mark-to-market value.

    Returns ``(new_state, reward, done, info)``.
    """
    if state.done:
        raise EnvError("step called on a finished episode")
    t = state.step_index
    price = panel.close[t]
    turb = _turbulence_series(panel)[t]
    return _step_stock(state, action, price, panel.close[t + 1], turb, t + 1 >= panel.n_steps - 1, cfg)


def _step_stock(state, action, price, next_price, turb, last, cfg):
    a = np.clip(np.asarray(action, dtype=np.float64), -1.0, 1.0)
    if a.shape != state.holdings.shape:
        raise EnvError(f"action has shape {a.shape}, expected {state.holdings.shape}")
    delta = np.rint(a * cfg.hmax).astype(np.int64)
    turbulent = cfg.turbulence_threshold is not None and turb >= cfg.turbulence_threshold

    holdings = state.holdings.copy()
    value_before = float(state.cash + state.holdings @ price)
    cash, executed, costs, slippage = _trade_stock(state.cash, holdings, price, delta, turbulent, cfg)
    value_after_trade = float(cash + holdings @ price)
    value_next = float(cash + holdings @ next_price)

    new_state = EnvState(state.step_index + 1, cash, holdings, last)
    reward = (value_next - value_before) * cfg.reward_scaling
    info = {
        "value_before": value_before,
        "value_after_trade": value_after_trade,
        "value": value_next,
        "costs": costs,
        "slippage": slippage,
        "executed": executed,
        "turbulent": bool(turbulent),
    }
    return new_state, reward, last, info


def step_allocation(state: EnvState, action: Sequence[float], panel: MarketPanel, cfg: EnvConfig):
    """Rebalance to ``softmax(action)`` value weights, then advance one row.

    Turnover is valued at the pre-trade target; fees and spread are taken
    out of the portfolio before the new fractional holdings are set. Under
    turbulence the whole book moves to cash. Reward is the log return.
    """
    if state.done:
        raise EnvError("step called on a finished episode")
    t = state.step_index
    turb = _turbulence_series(panel)[t]
    return _step_alloc(state, action, panel.close[t], panel.close[t + 1], turb, t + 1 >= panel.n_steps - 1, cfg)


def _step_alloc(state, action, price, next_price, turb, last, cfg):
    logits = np.asarray(action, dtype=np.float64)
    if logits.shape != state.holdings.shape:
        raise EnvError(f"action has shape {logits.shape}, expected {state.holdings.shape}")
    turbulent = cfg.turbulence_threshold is not None and turb >= cfg.turbulence_threshold
    current = state.holdings * price
    value_before = float(state.cash + current.sum())
    if turbulent:
        target = np.zeros_like(current)
    else:
        target = softmax(logits) * value_before
    trades = np.abs(target - current)
    turnover = float(trades.sum())
    cm = cfg.cost_model
    if cm.kind == "flat-fee":
        costs = cm.flat_fee * int(np.count_nonzero(trades > 0))
    else:
        costs = cm.rate * turnover
    slippage = cfg.bid_ask_spread * turnover
    net = value_before - costs - slippage
    if not net > 0:
        raise EnvError(f"rebalancing costs {costs + slippage:.6g} exhaust portfolio value {value_before:.6g}")

    if turbulent:
        holdings = np.zeros_like(state.holdings)
        cash = net
    else:
        holdings = target * (net / value_before) / price
        cash = 0.0
    value_after_trade = float(cash + holdings @ price)
    value_next = float(cash + holdings @ next_price)
    new_state = EnvState(state.step_index + 1, cash, holdings, last)
    reward = math.log(value_next / value_before)
    info = {
        "value_before": value_before,
        "value_after_trade": value_after_trade,
        "value": value_next,
        "costs": costs,
        "slippage": slippage,
        "turnover": turnover,
        "turbulent": bool(turbulent),
    }
    return new_state, reward, last, info


# ---------------------------------------------------------------- stateful envs


class StockTradingEnv:
    """Share-level multi-asset trading over a replayed panel."""

    kind = "stock"
    fractional = False

    def __init__(self, panel: MarketPanel, cfg: EnvConfig | None = None):
        self.panel = panel
        self.cfg = cfg or EnvConfig()
        _check_start(panel, self.cfg)
        self._close = panel.close
        self._feat_idx = _observation_features(panel, self.cfg)
        self._features = np.ascontiguousarray(panel.values[:, :, self._feat_idx]).reshape(panel.n_steps, -1)
        self._turb = np.array(_turbulence_series(panel))
        self.layout = ObservationLayout(panel.n_symbols, len(self._feat_idx))
        self.state: EnvState | None = None

    @property
    def n_assets(self) -> int:
        return self.panel.n_symbols

    @property
    def observation_dim(self) -> int:
        return self.layout.dim

    @property
    def episode_length(self) -> int:
        return self.panel.n_steps - 1 - self.cfg.start_step

    def _obs(self) -> np.ndarray:
        s = self.state
        t = s.step_index
        out = np.empty(self.layout.dim)
        n = self.n_assets
        out[0] = s.cash
        out[1:1 + n] = s.holdings
        out[1 + n:1 + 2 * n] = self._close[t]
        out[1 + 2 * n:-1] = self._features[t]
        out[-1] = self._turb[t]
        return out

    def reset(self, seed: int = 0) -> np.ndarray:
        self.state, _ = reset(self.panel, self.cfg, seed, fractional=self.fractional)
        return self._obs()

    def value(self) -> float:
        return float(self.state.cash + self.state.holdings @ self._close[self.state.step_index])

    @property
    def timestamp(self) -> int:
        return int(self.panel.timestamps[self.state.step_index])

    def _core(self, state, action, price, next_price, turb, last):
        return _step_stock(state, action, price, next_price, turb, last, self.cfg)

    def step(self, action):
        s = self.state
        if s is None:
            raise EnvError("reset() must be called before step()")
        if s.done:
            raise EnvError("step called on a finished episode")
        t = s.step_index
        last = t + 1 >= self.panel.n_steps - 1
        self.state, reward, done, info = self._core(s, action, self._close[t], self._close[t + 1], self._turb[t], last)
        return self._obs(), reward, done, info


class PortfolioAllocationEnv(StockTradingEnv):
    """Weight-level allocation with fractional holdings and log-return reward."""

    kind = "allocation"
    fractional = True

    def _core(self, state, action, price, next_price, turb, last):
        return _step_alloc(state, action, price, next_price, turb, last, self.cfg)


ENV_KINDS = {"stock": StockTradingEnv, "allocation": PortfolioAllocationEnv}


def make_env(kind: str, panel: MarketPanel, cfg: EnvConfig | None = None) -> StockTradingEnv:
    try:
        return ENV_KINDS[kind](panel, cfg)
    except KeyError:
        raise ConfigError(f"unknown environment kind {kind!r}; expected one of {sorted(ENV_KINDS)}") from None

"""Classical strategies behind the same ``act(observation, rng)`` interface.

None of these consult ``rng``. Policies that need history read close
prices out of the observation and keep them between calls; ``reset()``
clears that memory at the start of an episode.
"""

from __future__ import annotations

from collections import deque

import numpy as np

from ..errors import ConfigError
from .optimize import mean_variance_weights, min_variance_weights, ridge


def _close_slice(n: int) -> slice:
    return slice(1 + n, 1 + 2 * n)


class ZeroPolicy:
    """Never trades (stock env) or holds equal weights (allocation env)."""

    name = "zero"

    def __init__(self, n_assets: int):
        self.n_assets = n_assets

    def act(self, observation, rng=None):
        return np.zeros(self.n_assets)

    def to_dict(self):
        return {"name": self.name, "n_assets": self.n_assets}


class RandomPolicy:
    """Uniform intents in [-1, 1]; the only baseline that uses ``rng``."""

    name = "random"

    def __init__(self, n_assets: int):
        self.n_assets = n_assets

    def act(self, observation, rng):
        return rng.uniform(-1.0, 1.0, self.n_assets)

    def to_dict(self):
        return {"name": self.name, "n_assets": self.n_assets}


class BuyAndHold:
    name = "buy_and_hold"

    def __init__(self, n_assets: int):
        self.n_assets = n_assets
        self._steps = 0

    def reset(self):
        self._steps = 0

    def act(self, observation, rng=None):
        a = np.ones(self.n_assets) if self._steps == 0 else np.zeros(self.n_assets)
        self._steps += 1
        return a

    def to_dict(self):
        return {"name": self.name, "n_assets": self.n_assets}


def buy_and_hold(panel, cfg=None) -> BuyAndHold:
    """Full buy intent on every symbol at the first step, then hold."""
    return BuyAndHold(panel.n_symbols)


class EqualWeight:
    name = "equal_weight"

    def __init__(self, n_assets: int):
        if n_assets < 1:
            raise ConfigError("equal_weight needs at least one asset")
        self.n_assets = n_assets

    def act(self, observation, rng=None):
        return np.zeros(self.n_assets)

    def to_dict(self):
        return {"name": self.name, "n_assets": self.n_assets}


def equal_weight(n_assets: int) -> EqualWeight:
    return EqualWeight(n_assets)


class _PriceHistory:
    lookback = 0

    def __init__(self, n_assets: int):
        self.n_assets = n_assets
        self._closes: deque = deque()

    def reset(self):
        self._closes = deque(maxlen=self.lookback + 1)

    def _record(self, observation) -> np.ndarray:
        self._closes.append(np.array(observation[_close_slice(self.n_assets)], dtype=np.float64))
        return np.array(self._closes)


class Momentum(_PriceHistory):
    """Buy the ``top_k`` trailing winners, sell the rest.

    Ranks by return over the last ``lookback`` steps; equal returns keep
    symbol order. Holds until ``lookback`` steps of history exist.
    """

    name = "momentum"

    def __init__(self, n_assets: int, lookback: int, top_k: int):
        if lookback < 1:
            raise ConfigError("momentum lookback must be >= 1")
        if not 1 <= top_k <= n_assets:
            raise ConfigError(f"top_k must lie in [1, {n_assets}]")
        self.lookback = lookback
        self.top_k = top_k
        super().__init__(n_assets)
        self.reset()

    def act(self, observation, rng=None):
        closes = self._record(observation)
        if len(closes) <= self.lookback:
            return np.zeros(self.n_assets)
        trailing = closes[-1] / closes[-1 - self.lookback] - 1.0
        order = np.argsort(-trailing, kind="stable")
        action = -np.ones(self.n_assets)
        action[order[: self.top_k]] = 1.0
        return action

    def to_dict(self):
        return {"name": self.name, "n_assets": self.n_assets, "lookback": self.lookback, "top_k": self.top_k}


def momentum(lookback: int, top_k: int, n_assets: int) -> Momentum:
    return Momentum(n_assets, lookback, top_k)


def weights_to_logits(w: np.ndarray) -> np.ndarray:
    # zero weights map to a logit far enough below the rest to vanish under softmax
    return np.log(np.maximum(w, 1e-300))


class _CovariancePolicy(_PriceHistory):
    def __init__(self, n_assets: int, lookback: int, iterations: int = 500):
        if lookback < n_assets + 2:
            raise ConfigError(f"lookback {lookback} must be >= N + 2 = {n_assets + 2}")
        self.lookback = lookback
        self.iterations = iterations
        super().__init__(n_assets)
        self.reset()

    def _moments(self, observation):
        closes = self._record(observation)
        if len(closes) <= self.lookback:
            return None
        window = closes[-1 - self.lookback:]
        rets = window[1:] / window[:-1] - 1.0
        return rets.mean(axis=0), ridge(np.atleast_2d(np.cov(rets, rowvar=False)))

    def act(self, observation, rng=None):
        moments = self._moments(observation)
        if moments is None:
            return np.zeros(self.n_assets)
        return weights_to_logits(self._solve(*moments))


class MinVariance(_CovariancePolicy):
    name = "min_variance"

    def _solve(self, mu, cov):
        return min_variance_weights(cov, self.iterations)

    def to_dict(self):
        return {"name": self.name, "n_assets": self.n_assets, "lookback": self.lookback}


class MeanVariance(_CovariancePolicy):
    name = "mean_variance"

    def __init__(self, n_assets: int, lookback: int, risk_aversion: float, iterations: int = 500):
        if not risk_aversion > 0:
            raise ConfigError("risk_aversion must be > 0")
        super().__init__(n_assets, lookback, iterations)
        self.risk_aversion = risk_aversion

    def _solve(self, mu, cov):
        return mean_variance_weights(mu, cov, self.risk_aversion, self.iterations)

    def to_dict(self):
        return {"name": self.name, "n_assets": self.n_assets, "lookback": self.lookback,
                "risk_aversion": self.risk_aversion}


def min_variance(lookback: int, n_assets: int) -> MinVariance:
    return MinVariance(n_assets, lookback)


def mean_variance(lookback: int, risk_aversion: float, n_assets: int) -> MeanVariance:
    return MeanVariance(n_assets, lookback, risk_aversion)


BASELINES = {
    cls.name: cls
    for cls in (ZeroPolicy, RandomPolicy, BuyAndHold, EqualWeight, Momentum, MinVariance, MeanVariance)
}


def baseline_from_dict(d: dict):
    d = dict(d)
    name = d.pop("name")
    try:
        cls = BASELINES[name]
    except KeyError:
        raise ConfigError(f"unknown baseline policy {name!r}") from None
    return cls(**d)

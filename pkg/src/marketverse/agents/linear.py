"""Linear-Gaussian policy with a running observation normaliser."""

from __future__ import annotations

import math

import numpy as np


class RunningNormalizer:
    """Per-dimension running mean/variance (parallel Welford merge).

    Once ``frozen`` the statistics no longer change, which keeps evaluation
    episodes reproducible.
    """

    def __init__(self, dim: int, epsilon: float = 1e-8):
        self.mean = np.zeros(dim)
        self.var = np.ones(dim)
        self.count = 0.0
        self.epsilon = epsilon
        self.frozen = False

    def update(self, batch: np.ndarray) -> None:
        if self.frozen or len(batch) == 0:
            return
        batch = np.asarray(batch, dtype=np.float64)
        b_mean = batch.mean(axis=0)
        b_var = batch.var(axis=0)
        b_count = batch.shape[0]
        if self.count == 0:
            self.mean, self.var, self.count = b_mean, b_var, float(b_count)
            return
        total = self.count + b_count
        delta = b_mean - self.mean
        m2 = self.var * self.count + b_var * b_count + delta**2 * self.count * b_count / total
        self.mean = self.mean + delta * b_count / total
        self.var = m2 / total
        self.count = total

    def __call__(self, obs: np.ndarray) -> np.ndarray:
        return (obs - self.mean) / np.sqrt(self.var + self.epsilon)

    def state_dict(self) -> dict:
        return {"mean": self.mean.tolist(), "var": self.var.tolist(), "count": self.count,
                "epsilon": self.epsilon, "frozen": self.frozen}

    @classmethod
    def from_state(cls, d: dict) -> "RunningNormalizer":
        n = cls(len(d["mean"]), d["epsilon"])
        n.mean = np.asarray(d["mean"], dtype=np.float64)
        n.var = np.asarray(d["var"], dtype=np.float64)
        n.count = float(d["count"])
        n.frozen = bool(d["frozen"])
        return n


class LinearPolicy:
    """``a = W @ normalize(obs) + b + noise_scale * eps``, ``eps ~ N(0, I)``.

    With ``noise_scale == 0`` the policy is deterministic and ignores ``rng``.
    """

    name = "linear"

    def __init__(self, observation_dim: int, action_dim: int, noise_scale: float = 0.0, init_scale: float = 0.0,
                 seed: int = 0):
        self.observation_dim = observation_dim
        self.action_dim = action_dim
        rng = np.random.default_rng(seed)
        self.weights = init_scale * rng.standard_normal((action_dim, observation_dim))
        self.bias = np.zeros(action_dim)
        self.noise_scale = float(noise_scale)
        self.normalizer = RunningNormalizer(observation_dim)

    @property
    def n_params(self) -> int:
        return self.weights.size + self.bias.size

    def get_params(self) -> np.ndarray:
        return np.concatenate([self.weights.ravel(), self.bias])

    def set_params(self, flat: np.ndarray) -> None:
        flat = np.asarray(flat, dtype=np.float64)
        k = self.weights.size
        self.weights = flat[:k].reshape(self.action_dim, self.observation_dim).copy()
        self.bias = flat[k:].copy()

    def mean_action(self, obs: np.ndarray) -> np.ndarray:
        return self.weights @ self.normalizer(obs) + self.bias

    def act(self, observation: np.ndarray, rng: np.random.Generator | None = None) -> np.ndarray:
        mean = self.mean_action(observation)
        if self.noise_scale > 0:
            mean = mean + self.noise_scale * rng.standard_normal(self.action_dim)
        return mean

    def log_prob(self, features: np.ndarray, actions: np.ndarray, params: np.ndarray | None = None) -> np.ndarray:
        """Gaussian log-density of ``actions`` given already-normalised ``features``."""
        if params is None:
            W, b = self.weights, self.bias
        else:
            k = self.weights.size
            W = params[:k].reshape(self.action_dim, self.observation_dim)
            b = params[k:]
        sigma = self.noise_scale
        mu = features @ W.T + b
        z = (actions - mu) / sigma
        return -0.5 * (z**2).sum(axis=1) - self.action_dim * (math.log(sigma) + 0.5 * math.log(2 * math.pi))

    def deterministic(self) -> "LinearPolicy":
        clone = LinearPolicy.__new__(LinearPolicy)
        clone.__dict__.update(self.__dict__)
        clone.noise_scale = 0.0
        return clone

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "observation_dim": self.observation_dim,
            "action_dim": self.action_dim,
            "noise_scale": self.noise_scale,
            "weights": self.weights.tolist(),
            "bias": self.bias.tolist(),
            "normalizer": self.normalizer.state_dict(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "LinearPolicy":
        p = cls(d["observation_dim"], d["action_dim"], d["noise_scale"])
        p.weights = np.asarray(d["weights"], dtype=np.float64).reshape(p.action_dim, p.observation_dim)
        p.bias = np.asarray(d["bias"], dtype=np.float64)
        p.normalizer = RunningNormalizer.from_state(d["normalizer"])
        return p

"""REINFORCE for :class:`LinearPolicy`, plus deterministic evaluation."""

from __future__ import annotations

import copy
import functools
import logging
from dataclasses import dataclass, asdict, field
from typing import Callable, Sequence

import numpy as np

from ..errors import ConfigError, EnvError, TrainingDivergence
from ..parallel import WorkerPoolConfig, run_batch
from ..rollout import Trajectory, rollout
from .linear import LinearPolicy

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class ReinforceConfig:
    gamma: float = 0.99
    learning_rate: float = 0.05
    episodes_per_update: int = 8
    total_updates: int = 30
    seed: int = 0
    baseline: str = "mean-return"  # or "none"
    noise_start: float = 0.5
    noise_end: float = 0.1
    normalize_advantages: bool = True
    max_grad_norm: float | None = 10.0
    steps_per_episode: int | None = None
    workers: int = 1

    def __post_init__(self):
        if not 0 < self.gamma < 1:
            raise ConfigError("gamma must lie in (0, 1)")
        if self.learning_rate < 0:
            raise ConfigError("learning_rate must be >= 0")
        if self.episodes_per_update < 1 or self.total_updates < 1:
            raise ConfigError("episodes_per_update and total_updates must be >= 1")
        if self.baseline not in ("none", "mean-return"):
            raise ConfigError(f"unknown baseline {self.baseline!r}")
        if not (self.noise_start > 0 and self.noise_end > 0):
            raise ConfigError("exploration noise must be > 0")

    def noise_at(self, update: int) -> float:
        """Geometric schedule from ``noise_start`` to ``noise_end``."""
        if self.total_updates == 1:
            return self.noise_start
        frac = update / (self.total_updates - 1)
        return float(self.noise_start * (self.noise_end / self.noise_start) ** frac)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class TrainingResult:
    policy: LinearPolicy
    learning_curve: list[float] = field(default_factory=list)


def discounted_returns(rewards: Sequence[float], gamma: float) -> np.ndarray:
    """``G_t = sum_k gamma**k * r_{t+k}``."""
    r = np.asarray(rewards, dtype=np.float64)
    out = np.empty_like(r)
    acc = 0.0
    for t in range(len(r) - 1, -1, -1):
        acc = r[t] + gamma * acc
        out[t] = acc
    return out


def advantages(trajectories: Sequence[Trajectory], cfg: ReinforceConfig) -> list[np.ndarray]:
    """Discounted returns minus the baseline, one array per trajectory.

    The mean-return baseline averages ``G_t`` across episodes at each
    time index (over the episodes that reach it); with a single episode
    it falls back to that episode's mean return.
    """
    returns = [discounted_returns(t.rewards, cfg.gamma) for t in trajectories]
    if cfg.baseline == "none":
        advs = returns
    elif len(returns) == 1:
        advs = [returns[0] - returns[0].mean()]
    else:
        longest = max(len(g) for g in returns)
        total = np.zeros(longest)
        count = np.zeros(longest)
        for g in returns:
            total[: len(g)] += g
            count[: len(g)] += 1
        b = total / np.maximum(count, 1)
        advs = [g - b[: len(g)] for g in returns]
    if cfg.normalize_advantages:
        flat = np.concatenate(advs)
        sd = flat.std()
        if sd > 0:
            advs = [a / sd for a in advs]
    return advs


def policy_gradient(policy: LinearPolicy, features: np.ndarray, actions: np.ndarray, adv: np.ndarray) -> np.ndarray:
    """Gradient of ``mean_t adv_t * log pi(a_t | s_t)`` w.r.t. ``[W.ravel(), b]``.

    ``features`` are normalised observations, one row per transition.
    """
    sigma2 = policy.noise_scale**2
    mu = features @ policy.weights.T + policy.bias
    coef = adv[:, None] * (actions - mu) / sigma2
    m = len(adv)
    g_w = coef.T @ features / m
    g_b = coef.sum(axis=0) / m
    return np.concatenate([g_w.ravel(), g_b])


def surrogate_objective(policy: LinearPolicy, params: np.ndarray, features, actions, adv) -> float:
    """``mean_t adv_t * log pi(a_t | s_t)`` evaluated at ``params``; the finite-difference target."""
    return float(np.mean(adv * policy.log_prob(features, actions, params)))


def _batch_arrays(policy: LinearPolicy, trajectories, advs):
    obs = np.concatenate([t.observations for t in trajectories])
    acts = np.concatenate([t.actions for t in trajectories])
    return obs, policy.normalizer(obs), acts, np.concatenate(advs)


_PRIMER_ID = 2**31 - 1


def _seeds(base: int, update: int) -> int:
    return int(np.random.SeedSequence([base, update]).generate_state(1)[0])


def train_reinforce(env_factory: Callable[[int], object], policy: LinearPolicy, cfg: ReinforceConfig) -> TrainingResult:
    """Train a copy of ``policy`` and return it with the per-update mean episode return.

    ``env_factory(seed)`` must return a fresh environment; it must be
    picklable when ``cfg.workers > 1``. Update ``k`` rolls out episodes
    seeded ``s_k + i`` where ``s_k`` derives from ``(cfg.seed, k)``, so
    training is fully determined by ``cfg.seed``.
    """
    policy = copy.deepcopy(policy)
    policy.normalizer.frozen = False
    curve: list[float] = []
    E = cfg.episodes_per_update

    def collect(update: int, noise: float):
        base = _seeds(cfg.seed, update)
        specs = [functools.partial(env_factory, base + i) for i in range(E)]
        actor = copy.deepcopy(policy)
        actor.noise_scale = noise
        batch = run_batch(specs, actor, cfg.steps_per_episode, WorkerPoolConfig(cfg.workers, base))
        return batch.trajectories

    if policy.normalizer.count == 0:
        # prime observation statistics from one exploratory batch
        primer = collect(_PRIMER_ID, cfg.noise_start)
        policy.normalizer.update(np.concatenate([t.observations for t in primer]))

    for k in range(cfg.total_updates):
        noise = cfg.noise_at(k)
        trajectories = collect(k, noise)
        policy.noise_scale = noise
        advs = advantages(trajectories, cfg)
        raw_obs, feats, acts, adv = _batch_arrays(policy, trajectories, advs)
        grad = policy_gradient(policy, feats, acts, adv)
        if cfg.max_grad_norm is not None:
            norm = float(np.linalg.norm(grad))
            if norm > cfg.max_grad_norm:
                grad = grad * (cfg.max_grad_norm / norm)
        with np.errstate(invalid="ignore", over="ignore"):
            params = policy.get_params() + cfg.learning_rate * grad
        if not np.all(np.isfinite(params)):
            raise TrainingDivergence(f"non-finite parameters after update {k}", {"update": k})
        policy.set_params(params)
        policy.normalizer.update(raw_obs)
        curve.append(float(np.mean([t.total_reward for t in trajectories])))
        logger.debug("update %d noise %.4f mean return %.6g", k, noise, curve[-1])

    policy.normalizer.frozen = True
    policy.noise_scale = cfg.noise_end
    return TrainingResult(policy, curve)


def evaluate_policy(policy, env_factory, seed: int = 0) -> Trajectory:
    """One noiseless episode of ``policy`` in ``env_factory(seed)``.

    ``env_factory`` may also be an environment instance.
    """
    env = env_factory(seed) if callable(env_factory) else env_factory
    if hasattr(policy, "observation_dim") and policy.observation_dim != env.observation_dim:
        raise EnvError(f"policy expects {policy.observation_dim}-dim observations, env emits {env.observation_dim}")
    n = getattr(policy, "action_dim", getattr(policy, "n_assets", env.n_assets))
    if n != env.n_assets:
        raise EnvError(f"policy emits {n} actions, env trades {env.n_assets} assets")
    if hasattr(policy, "deterministic"):
        policy = policy.deterministic()
    return rollout(env, policy, seed)

"""Episode rollouts and the Trajectory record."""

from __future__ import annotations

import copy
import hashlib
from dataclasses import dataclass
from typing import Protocol, runtime_checkable

import numpy as np

from .errors import EnvError


@runtime_checkable
class Policy(Protocol):
    """Anything with ``act(observation, rng) -> action`` plugs into the envs.

    Policies that keep per-episode memory also define ``reset()``; the
    rollout loop calls it before the first step.
    """

    def act(self, observation: np.ndarray, rng: np.random.Generator) -> np.ndarray: ...


@dataclass(eq=False)
class Trajectory:
    observations: np.ndarray  # (S, D)
    actions: np.ndarray  # (S, N) raw policy output, before env clipping
    rewards: np.ndarray  # (S,)
    next_observations: np.ndarray  # (S, D)
    dones: np.ndarray  # (S,)
    values: np.ndarray  # (S + 1,) mark-to-market value, starting before the first action
    timestamps: np.ndarray  # (S + 1,)
    costs: np.ndarray  # (S,) fees plus spread slippage paid each step
    env_index: int = 0
    seed: int = 0

    def __len__(self) -> int:
        return len(self.rewards)

    @property
    def total_reward(self) -> float:
        return float(self.rewards.sum())

    def digest(self) -> str:
        h = hashlib.sha256()
        for arr in (self.observations, self.actions, self.rewards, self.next_observations,
                    self.dones, self.values, self.timestamps, self.costs):
            h.update(np.ascontiguousarray(arr).tobytes())
        h.update(f"{self.env_index}:{self.seed}".encode())
        return h.hexdigest()


def rollout(env, policy, seed: int, max_steps: int | None = None, env_index: int = 0) -> Trajectory:
    """Run one episode (or ``max_steps`` steps) of ``policy`` in ``env``.

    The policy is deep-copied first so per-episode memory never leaks
    between episodes or workers. All randomness comes from a generator
    seeded with ``seed``.
    """
    policy = copy.deepcopy(policy)
    if hasattr(policy, "reset"):
        policy.reset()
    rng = np.random.default_rng(seed)
    obs = env.reset(seed)
    if max_steps is None:
        max_steps = env.episode_length
    if obs.shape[0] != env.observation_dim:
        raise EnvError("observation dimension mismatch")

    observations, actions, rewards, dones, costs = [], [], [], [], []
    values = [env.value()]
    timestamps = [env.timestamp]
    done = False
    n = 0
    while not done and n < max_steps:
        action = np.asarray(policy.act(obs, rng), dtype=np.float64)
        if action.shape != (env.n_assets,):
            raise EnvError(f"policy returned action of shape {action.shape}, env expects ({env.n_assets},)")
        next_obs, reward, done, info = env.step(action)
        observations.append(obs)
        actions.append(action)
        rewards.append(reward)
        dones.append(done)
        costs.append(info["costs"] + info["slippage"])
        values.append(info["value"])
        timestamps.append(env.timestamp)
        obs = next_obs
        n += 1

    obs_arr = np.array(observations)
    next_arr = np.empty_like(obs_arr)
    if n:
        next_arr[:-1] = obs_arr[1:]
        next_arr[-1] = obs
    return Trajectory(
        observations=obs_arr,
        actions=np.array(actions),
        rewards=np.array(rewards, dtype=np.float64),
        next_observations=next_arr,
        dones=np.array(dones, dtype=bool),
        values=np.array(values, dtype=np.float64),
        timestamps=np.array(timestamps, dtype=np.int64),
        costs=np.array(costs, dtype=np.float64),
        env_index=env_index,
        seed=seed,
    )

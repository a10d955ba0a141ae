"""Deterministic multi-worker rollouts.

Environment ``i`` is always seeded ``base_seed + i`` and results are
gathered in index order, so a batch is a pure function of its inputs no
matter how many workers ran it or how they were scheduled.
"""

from __future__ import annotations

import csv
import hashlib
import logging
import multiprocessing as mp
import time
from concurrent.futures import Executor, ProcessPoolExecutor, ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .data import MarketPanel
from .env import EnvConfig, make_env
from .errors import BatchError, ConfigError
from .rollout import Trajectory, rollout

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class EnvSpec:
    panel: MarketPanel
    config: EnvConfig = field(default_factory=EnvConfig)
    kind: str = "stock"

    def build(self):
        return make_env(self.kind, self.panel, self.config)


@dataclass(frozen=True)
class WorkerPoolConfig:
    workers: int = 1
    base_seed: int = 0
    backend: str = "process"  # or "thread"

    def __post_init__(self):
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")
        if self.backend not in ("process", "thread"):
            raise ConfigError(f"unknown backend {self.backend!r}")


@dataclass
class RolloutBatch:
    trajectories: list[Trajectory]
    transition_count: int
    seconds: float
    steps_per_second: float
    workers: int

    def digest(self) -> str:
        """Hash of the payload only; timing fields are excluded."""
        h = hashlib.sha256()
        for tr in self.trajectories:
            h.update(tr.digest().encode())
        return h.hexdigest()


def _build(spec):
    return spec.build() if hasattr(spec, "build") else spec()


def _run_chunk(items, policy, steps_per_env):
    out = []
    for index, seed, spec in items:
        try:
            traj = rollout(_build(spec), policy, seed, steps_per_env, env_index=index)
        except Exception as exc:  # reported back with the env index, raised in the parent
            return [("error", index, f"{type(exc).__name__}: {exc}")]
        out.append(("ok", index, traj))
    return out


def _pool(backend: str, workers: int) -> Executor:
    if backend == "thread":
        return ThreadPoolExecutor(max_workers=workers)
    ctx = mp.get_context("fork") if "fork" in mp.get_all_start_methods() else None
    return ProcessPoolExecutor(max_workers=workers, mp_context=ctx)


def run_batch(
    env_specs: Sequence[EnvSpec | Callable],
    policy,
    steps_per_env: int | None,
    pool: WorkerPoolConfig | None = None,
    executor: Executor | None = None,
) -> RolloutBatch:
    """Roll out every environment once and gather trajectories by index.

    ``env_specs`` holds :class:`EnvSpec` objects or zero-argument factories.
    ``steps_per_env=None`` runs each episode to its end. Work is dealt to
    workers round-robin; pass ``executor`` to reuse a live pool.
    """
    pool = pool or WorkerPoolConfig()
    E = len(env_specs)
    if E < 1:
        raise ConfigError("run_batch needs at least one environment")
    W = min(pool.workers, E)
    items = [(i, pool.base_seed + i, spec) for i, spec in enumerate(env_specs)]
    chunks = [items[w::W] for w in range(W)]

    start = time.perf_counter()
    if W == 1 and executor is None:
        results = [_run_chunk(items, policy, steps_per_env)]
    elif executor is not None:
        results = list(executor.map(_run_chunk, chunks, [policy] * W, [steps_per_env] * W))
    else:
        with _pool(pool.backend, W) as ex:
            results = list(ex.map(_run_chunk, chunks, [policy] * W, [steps_per_env] * W))
    seconds = time.perf_counter() - start

    by_index: dict[int, Trajectory] = {}
    for chunk in results:
        for status, index, payload in chunk:
            if status == "error":
                raise BatchError(f"environment {index} failed: {payload}", index)
            by_index[index] = payload
    trajectories = [by_index[i] for i in range(E)]
    count = sum(len(t) for t in trajectories)
    return RolloutBatch(trajectories, count, seconds, count / seconds if seconds > 0 else float("inf"), W)


BENCH_COLUMNS = ("workers", "envs", "steps", "seconds", "steps_per_sec")


def throughput_benchmark(
    panel: MarketPanel,
    n_envs: int,
    worker_counts: Sequence[int],
    steps: int,
    policy=None,
    env_config: EnvConfig | None = None,
    kind: str = "stock",
    backend: str = "process",
) -> list[dict]:
    """Measure steps/second for each worker count. Observational only.

    Worker counts above ``n_envs`` are capped and reported at the cap.
    """
    from .agents.baselines import RandomPolicy

    policy = policy or RandomPolicy(panel.n_symbols)
    specs = [EnvSpec(panel, env_config or EnvConfig(), kind)] * n_envs
    rows = []
    for w in worker_counts:
        eff = min(int(w), n_envs)
        if eff != w:
            logger.info("capping %d workers at %d environments", w, n_envs)
        batch = run_batch(specs, policy, steps, WorkerPoolConfig(eff, 0, backend))
        rows.append({
            "workers": eff,
            "envs": n_envs,
            "steps": batch.transition_count,
            "seconds": batch.seconds,
            "steps_per_sec": batch.steps_per_second,
        })
    return rows


def write_benchmark_csv(rows: Sequence[dict], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=BENCH_COLUMNS)
        w.writeheader()
        for r in rows:
            w.writerow({k: r[k] for k in BENCH_COLUMNS})

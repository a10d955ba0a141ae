import csv

import numpy as np
import pytest

from marketverse.agents import LinearPolicy, RandomPolicy, ZeroPolicy
from marketverse.env import EnvConfig
from marketverse.errors import BatchError, ConfigError
from marketverse.parallel import (
    BENCH_COLUMNS,
    EnvSpec,
    WorkerPoolConfig,
    run_batch,
    throughput_benchmark,
    write_benchmark_csv,
)

from helpers import make_panel, random_walk


@pytest.fixture
def panel(rng):
    return make_panel(random_walk(rng, 60, 3))


class Exploding:
    """Factory that fails on construction; used to check error routing."""

    def __call__(self):
        raise RuntimeError("boom")


@pytest.mark.parametrize("backend", ["process", "thread"])
def test_worker_count_does_not_change_payload(panel, backend):
    specs = [EnvSpec(panel, EnvConfig(initial_cash=1e4))] * 12
    one = run_batch(specs, RandomPolicy(3), 20, WorkerPoolConfig(1, 5, backend))
    many = run_batch(specs, RandomPolicy(3), 20, WorkerPoolConfig(8, 5, backend))
    assert one.digest() == many.digest()
    assert [t.env_index for t in many.trajectories] == list(range(12))
    assert [t.seed for t in many.trajectories] == [5 + i for i in range(12)]


def test_transition_count(panel):
    batch = run_batch([EnvSpec(panel)] * 2, ZeroPolicy(3), 5, WorkerPoolConfig(2))
    assert batch.transition_count == 10
    assert sum(len(t) for t in batch.trajectories) == batch.transition_count


def test_zero_noise_gives_identical_trajectories(panel):
    batch = run_batch([EnvSpec(panel)] * 100, LinearPolicy(2 + 6, 3, init_scale=0.1), None, WorkerPoolConfig(4))
    first = batch.trajectories[0]
    for t in batch.trajectories[1:]:
        assert t.values.tobytes() == first.values.tobytes()
        assert t.actions.tobytes() == first.actions.tobytes()


def test_seeds_drive_exploration(panel):
    batch = run_batch([EnvSpec(panel)] * 3, RandomPolicy(3), 10)
    assert len({t.actions.tobytes() for t in batch.trajectories}) == 3


def test_full_episode_when_steps_none(panel):
    batch = run_batch([EnvSpec(panel)], ZeroPolicy(3), None)
    assert batch.transition_count == panel.n_steps - 1 and batch.trajectories[0].dones[-1]


def test_error_names_env_index(panel):
    specs = [EnvSpec(panel)] * 3 + [Exploding()] + [EnvSpec(panel)]
    with pytest.raises(BatchError) as err:
        run_batch(specs, ZeroPolicy(3), 5, WorkerPoolConfig(2))
    assert err.value.env_index == 3 and "environment 3" in str(err.value)


def test_panel_unchanged(panel):
    before = panel.checksum()
    run_batch([EnvSpec(panel)] * 4, RandomPolicy(3), 30, WorkerPoolConfig(2, backend="thread"))
    assert panel.checksum() == before


def test_pool_config_validation(panel):
    with pytest.raises(ConfigError):
        WorkerPoolConfig(0)
    with pytest.raises(ConfigError):
        WorkerPoolConfig(1, backend="gpu")
    with pytest.raises(ConfigError):
        run_batch([], ZeroPolicy(3), 1)


def test_benchmark_rows_and_capping(panel, tmp_path):
    rows = throughput_benchmark(panel, 2, [1, 4], 10, backend="thread")
    assert [r["workers"] for r in rows] == [1, 2]
    assert all(r["steps"] == 20 and r["envs"] == 2 for r in rows)
    assert len(throughput_benchmark(panel, 3, [1], 5, backend="thread")) == 1
    write_benchmark_csv(rows, tmp_path / "b.csv")
    with open(tmp_path / "b.csv") as fh:
        reader = csv.reader(fh)
        assert tuple(next(reader)) == BENCH_COLUMNS
        assert len(list(reader)) == 2
    assert np.isfinite(rows[0]["steps_per_sec"])

"""Policies: classical baselines, a linear-Gaussian learner, and checkpoints."""

from __future__ import annotations

import json
from pathlib import Path

from ..errors import ConfigError
from .baselines import (
    BASELINES,
    BuyAndHold,
    EqualWeight,
    MeanVariance,
    MinVariance,
    Momentum,
    RandomPolicy,
    ZeroPolicy,
    baseline_from_dict,
    buy_and_hold,
    equal_weight,
    mean_variance,
    min_variance,
    momentum,
)
from .linear import LinearPolicy, RunningNormalizer
from .optimize import mean_variance_weights, min_variance_weights, project_simplex
from .reinforce import (
    ReinforceConfig,
    TrainingResult,
    discounted_returns,
    evaluate_policy,
    policy_gradient,
    surrogate_objective,
    train_reinforce,
)

CHECKPOINT_FORMAT = "marketverse-policy"
CHECKPOINT_VERSION = 1


def policy_to_dict(policy) -> dict:
    if not hasattr(policy, "to_dict"):
        raise ConfigError(f"{type(policy).__name__} cannot be checkpointed (no to_dict)")
    return policy.to_dict()


def policy_from_dict(d: dict):
    if d.get("name") == LinearPolicy.name:
        return LinearPolicy.from_dict(d)
    return baseline_from_dict(d)


def save_policy(policy, path, config: dict | None = None) -> Path:
    """Write a versioned JSON checkpoint with an optional config echo."""
    doc = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "policy": policy_to_dict(policy),
        "config": config or {},
    }
    path = Path(path)
    path.write_text(json.dumps(doc, indent=1))
    return path


def load_policy(path):
    doc = json.loads(Path(path).read_text())
    if doc.get("format") != CHECKPOINT_FORMAT:
        raise ConfigError(f"{path} is not a policy checkpoint")
    if doc.get("version") != CHECKPOINT_VERSION:
        raise ConfigError(f"unsupported checkpoint version {doc.get('version')}")
    return policy_from_dict(doc["policy"]), doc.get("config", {})


__all__ = [
    "BASELINES", "BuyAndHold", "EqualWeight", "LinearPolicy", "MeanVariance", "MinVariance", "Momentum",
    "RandomPolicy", "ReinforceConfig", "RunningNormalizer", "TrainingResult", "ZeroPolicy", "buy_and_hold",
    "discounted_returns", "equal_weight", "evaluate_policy", "load_policy", "mean_variance",
    "mean_variance_weights", "min_variance", "min_variance_weights", "momentum", "policy_from_dict",
    "policy_gradient", "project_simplex", "save_policy", "surrogate_objective", "train_reinforce",
]

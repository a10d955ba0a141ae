"""Exception hierarchy shared by every layer.

Each class carries the CLI exit code used when it escapes a subcommand.
"""

from __future__ import annotations


class MarketverseError(Exception):
    exit_code = 1
    kind = "error"

    def __init__(self, message: str, details: dict | None = None):
        super().__init__(message)
        self.message = message
        self.details = details or {}

    def to_dict(self) -> dict:
        return {"error": self.kind, "message": self.message, "details": self.details}


class ConfigError(MarketverseError, ValueError):
    exit_code = 3
    kind = "config_error"


class DataError(MarketverseError, ValueError):
    exit_code = 4
    kind = "data_error"


class TrainingDivergence(MarketverseError, RuntimeError):
    exit_code = 5
    kind = "training_divergence"


class LockHeld(MarketverseError, RuntimeError):
    exit_code = 6
    kind = "lock_held"


class EnvError(MarketverseError, RuntimeError):
    exit_code = 7
    kind = "env_error"


class BatchError(MarketverseError, RuntimeError):
    """A rollout worker failed; ``env_index`` names the environment."""

    exit_code = 8
    kind = "batch_error"

    def __init__(self, message: str, env_index: int):
        super().__init__(message, {"env_index": env_index})
        self.env_index = env_index

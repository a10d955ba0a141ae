"""Market environments, trading agents and a reproducible backtest pipeline."""

__version__ = "0.1.0"

from .data import CleaningConfig, MarketPanel, align_and_clean, load_csv, split_panel  # noqa: E402
from .env import EnvConfig, PortfolioAllocationEnv, StockTradingEnv, make_env  # noqa: E402
from .errors import MarketverseError  # noqa: E402
from .features import IndicatorSpec, TurbulenceConfig, add_indicators, add_turbulence  # noqa: E402

__all__ = [
    "CleaningConfig", "EnvConfig", "IndicatorSpec", "MarketPanel", "MarketverseError", "PortfolioAllocationEnv",
    "StockTradingEnv", "TurbulenceConfig", "__version__", "add_indicators", "add_turbulence", "align_and_clean",
    "load_csv", "make_env", "split_panel",
]

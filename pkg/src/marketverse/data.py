"""OHLCV ingestion, cleaning and the immutable MarketPanel container."""

from __future__ import annotations

import csv
import datetime as dt
import hashlib
import json
import logging
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import DataError, ConfigError

logger = logging.getLogger(__name__)

BASE_FEATURES = ("close", "open", "high", "low", "volume")
CSV_COLUMNS = ("timestamp", "symbol", "open", "high", "low", "close", "volume")
SECONDS_PER_YEAR = 365 * 86400
TRADING_DAYS_PER_YEAR = 252
PANEL_FORMAT_VERSION = 1


@dataclass(frozen=True, slots=True)
class Bar:
    timestamp: int
    symbol: str
    open: float
    high: float
    low: float
    close: float
    volume: float

    def violations(self) -> list[str]:
        problems = []
        prices = (self.open, self.high, self.low, self.close)
        if not all(np.isfinite(p) and p > 0 for p in prices):
            problems.append("prices must be finite and > 0")
        elif self.low > min(self.open, self.close) or self.high < max(self.open, self.close):
            problems.append("OHLC bounds violated")
        if not (np.isfinite(self.volume) and self.volume >= 0):
            problems.append("volume must be finite and >= 0")
        return problems


@dataclass(frozen=True)
class CleaningConfig:
    max_gap_fraction: float = 0.05
    fill_policy: str = "forward-fill"  # or "drop-row"
    session_calendar: str = "continuous-24x7"  # or "exchange-sessions"
    session_open: str = "14:30"  # UTC, exchange-sessions only
    session_close: str = "21:00"

    def __post_init__(self):
        if not 0.0 <= self.max_gap_fraction <= 1.0:
            raise ConfigError(f"max_gap_fraction must lie in [0, 1], got {self.max_gap_fraction}")
        if self.fill_policy not in ("forward-fill", "drop-row"):
            raise ConfigError(f"unknown fill_policy {self.fill_policy!r}")
        if self.session_calendar not in ("continuous-24x7", "exchange-sessions"):
            raise ConfigError(f"unknown session_calendar {self.session_calendar!r}")
        if self.session_calendar == "exchange-sessions":
            if _hhmm_seconds(self.session_open) >= _hhmm_seconds(self.session_close):
                raise ConfigError("session_open must precede session_close")


@dataclass(frozen=True, eq=False)
class MarketPanel:
    """Time-aligned ``(time, symbol, feature)`` tensor.

    Arrays are made read-only on construction so a panel can be shared
    between rollout workers without copying.
    """

    timestamps: np.ndarray
    symbols: tuple[str, ...]
    feature_names: tuple[str, ...]
    values: np.ndarray
    interval_seconds: int
    periods_per_year: float
    meta: Mapping = field(default_factory=dict)

    def __post_init__(self):
        ts = np.array(self.timestamps, dtype=np.int64)
        vals = np.array(self.values, dtype=np.float64)
        object.__setattr__(self, "timestamps", ts)
        object.__setattr__(self, "values", vals)
        object.__setattr__(self, "symbols", tuple(self.symbols))
        object.__setattr__(self, "feature_names", tuple(self.feature_names))
        ts.setflags(write=False)
        vals.setflags(write=False)

        if self.feature_names[:5] != BASE_FEATURES:
            raise DataError(f"feature_names must begin with {BASE_FEATURES}")
        if len(set(self.feature_names)) != len(self.feature_names):
            raise DataError("duplicate feature name")
        if len(set(self.symbols)) != len(self.symbols):
            raise DataError("duplicate symbol")
        expected = (len(ts), len(self.symbols), len(self.feature_names))
        if vals.shape != expected:
            raise DataError(f"values shape {vals.shape} != {expected}")
        if len(ts) == 0:
            raise DataError("panel has no rows")
        if np.any(np.diff(ts) <= 0):
            raise DataError("timestamps must be strictly increasing")
        if self.interval_seconds <= 0:
            raise DataError("interval_seconds must be positive")
        if not self.periods_per_year > 0:
            raise DataError("periods_per_year must be positive")
        if not np.all(np.isfinite(vals)):
            raise DataError("panel contains NaN or infinite entries")
        if np.any(vals[:, :, 0] <= 0):
            raise DataError("close prices must be > 0")

    @property
    def n_steps(self) -> int:
        return self.values.shape[0]

    @property
    def n_symbols(self) -> int:
        return self.values.shape[1]

    def feature_index(self, name: str) -> int:
        try:
            return self.feature_names.index(name)
        except ValueError:
            raise KeyError(f"panel has no feature {name!r}") from None

    def feature(self, name: str) -> np.ndarray:
        """``(T, N)`` view of one feature."""
        return self.values[:, :, self.feature_index(name)]

    @property
    def close(self) -> np.ndarray:
        return self.values[:, :, 0]

    def with_features(self, names: Sequence[str], columns: Sequence[np.ndarray]) -> "MarketPanel":
        """Return a new panel with ``(T, N)`` columns appended."""
        clash = set(names) & set(self.feature_names)
        if clash or len(set(names)) != len(names):
            raise DataError(f"duplicate feature name: {sorted(clash) or list(names)}")
        extra = np.stack([np.asarray(c, dtype=np.float64) for c in columns], axis=-1)
        return MarketPanel(
            timestamps=self.timestamps,
            symbols=self.symbols,
            feature_names=self.feature_names + tuple(names),
            values=np.concatenate([self.values, extra], axis=-1),
            interval_seconds=self.interval_seconds,
            periods_per_year=self.periods_per_year,
            meta=dict(self.meta),
        )

    def slice_rows(self, start: int, stop: int) -> "MarketPanel":
        return MarketPanel(
            timestamps=self.timestamps[start:stop],
            symbols=self.symbols,
            feature_names=self.feature_names,
            values=self.values[start:stop],
            interval_seconds=self.interval_seconds,
            periods_per_year=self.periods_per_year,
            meta=dict(self.meta),
        )

    def checksum(self) -> str:
        h = hashlib.sha256()
        h.update(json.dumps(self._metadata(), sort_keys=True).encode())
        h.update(np.ascontiguousarray(self.values, dtype="<f8").tobytes())
        return h.hexdigest()

    def _metadata(self) -> dict:
        return {
            "format_version": PANEL_FORMAT_VERSION,
            "symbols": list(self.symbols),
            "features": list(self.feature_names),
            "interval_seconds": int(self.interval_seconds),
            "periods_per_year": float(self.periods_per_year),
            "timestamps": [int(t) for t in self.timestamps],
        }

    def save(self, directory: str | os.PathLike) -> Path:
        """Write ``metadata.json`` plus a little-endian float64 ``values.f64``."""
        path = Path(directory)
        path.mkdir(parents=True, exist_ok=True)
        meta = self._metadata()
        meta["meta"] = _jsonable(self.meta)
        (path / "metadata.json").write_text(json.dumps(meta, indent=1))
        np.ascontiguousarray(self.values, dtype="<f8").tofile(path / "values.f64")
        return path

    @classmethod
    def load(cls, directory: str | os.PathLike) -> "MarketPanel":
        path = Path(directory)
        try:
            meta = json.loads((path / "metadata.json").read_text())
            flat = np.fromfile(path / "values.f64", dtype="<f8")
        except FileNotFoundError as exc:
            raise DataError(f"not a panel directory: {path} ({exc.filename} missing)") from None
        shape = (len(meta["timestamps"]), len(meta["symbols"]), len(meta["features"]))
        if flat.size != int(np.prod(shape)):
            raise DataError(f"tensor file size {flat.size} does not match metadata shape {shape}")
        return cls(
            timestamps=np.asarray(meta["timestamps"], dtype=np.int64),
            symbols=tuple(meta["symbols"]),
            feature_names=tuple(meta["features"]),
            values=flat.reshape(shape).astype(np.float64),
            interval_seconds=int(meta["interval_seconds"]),
            periods_per_year=float(meta["periods_per_year"]),
            meta=meta.get("meta", {}),
        )


def _jsonable(obj):
    if isinstance(obj, Mapping):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.generic):
        return obj.item()
    return obj


# ---------------------------------------------------------------- parsing


def _hhmm_seconds(text: str) -> int:
    hh, mm = text.split(":")
    return int(hh) * 3600 + int(mm) * 60


def parse_timestamp(value: str | int | float) -> int:
    """Epoch seconds (int-like) or ISO-8601; naive datetimes are taken as UTC."""
    if isinstance(value, (int, np.integer)):
        return int(value)
    if isinstance(value, float):
        if value.is_integer():
            return int(value)
        raise ValueError(f"non-integral epoch seconds {value}")
    text = str(value).strip()
    try:
        return int(text)
    except ValueError:
        pass
    try:
        f = float(text)
    except ValueError:
        stamp = dt.datetime.fromisoformat(text.replace("Z", "+00:00"))
        if stamp.tzinfo is None:
            stamp = stamp.replace(tzinfo=dt.timezone.utc)
        return int(stamp.timestamp())
    if not f.is_integer():
        raise ValueError(f"non-integral epoch seconds {text}")
    return int(f)


def to_epoch(value, *, end_of_day: bool = False) -> int:
    """Range boundary to epoch seconds.

    Bare dates (``2021-08-14``) mean midnight UTC, or 23:59:59 when
    ``end_of_day`` so that date ranges are inclusive of their last day.
    """
    if isinstance(value, dt.datetime):
        if value.tzinfo is None:
            value = value.replace(tzinfo=dt.timezone.utc)
        return int(value.timestamp())
    if isinstance(value, dt.date):
        value = value.isoformat()
    if isinstance(value, str) and len(value.strip()) == 10 and value.count("-") == 2:
        day = dt.date.fromisoformat(value.strip())
        base = int(dt.datetime(day.year, day.month, day.day, tzinfo=dt.timezone.utc).timestamp())
        return base + 86399 if end_of_day else base
    return parse_timestamp(value)


def load_csv(path: str | os.PathLike, schema: Mapping[str, str] | None = None) -> list[Bar]:
    """Read OHLCV rows into bars.

    ``schema`` maps canonical column names (timestamp, symbol, open, high,
    low, close, volume) to the header names used in the file. Every row is
    validated; if any fails, a single DataError lists all bad rows by
    1-based data-row number.
    """
    schema = {c: c for c in CSV_COLUMNS} | dict(schema or {})
    path = Path(path)
    if not path.is_file():
        raise DataError(f"missing file: {path}", {"path": str(path)})

    bars: list[Bar] = []
    errors: dict[int, str] = {}
    seen: dict[tuple[int, str], int] = {}
    with path.open(newline="") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        missing = [c for c in CSV_COLUMNS if schema[c] not in header]
        if missing:
            raise DataError(
                f"missing column(s) {', '.join(schema[c] for c in missing)} in {path.name}",
                {"missing_columns": [schema[c] for c in missing]},
            )
        for row_no, row in enumerate(reader, start=1):
            try:
                ts = parse_timestamp(row[schema["timestamp"]])
            except (ValueError, TypeError):
                errors[row_no] = f"unparsable timestamp {row[schema['timestamp']]!r}"
                continue
            try:
                bar = Bar(
                    timestamp=ts,
                    symbol=row[schema["symbol"]].strip(),
                    open=float(row[schema["open"]]),
                    high=float(row[schema["high"]]),
                    low=float(row[schema["low"]]),
                    close=float(row[schema["close"]]),
                    volume=float(row[schema["volume"]]),
                )
            except (ValueError, TypeError, AttributeError):
                errors[row_no] = "unparsable numeric field"
                continue
            problems = bar.violations()
            if not bar.symbol:
                problems.append("empty symbol")
            key = (bar.timestamp, bar.symbol)
            if key in seen:
                problems.append(f"duplicate of row {seen[key]}")
            if problems:
                errors[row_no] = "; ".join(problems)
                continue
            seen[key] = row_no
            bars.append(bar)

    if errors:
        raise DataError(
            f"{len(errors)} invalid row(s) in {path.name}: rows {sorted(errors)}",
            {"rows": {str(k): v for k, v in sorted(errors.items())}},
        )
    return bars


def load_many(paths: Iterable[str | os.PathLike], schema: Mapping[str, str] | None = None) -> list[Bar]:
    bars: list[Bar] = []
    for p in paths:
        bars.extend(load_csv(p, schema))
    return bars


def write_csv(bars: Iterable[Bar], path: str | os.PathLike) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_COLUMNS)
        for b in bars:
            writer.writerow([b.timestamp, b.symbol, repr(b.open), repr(b.high), repr(b.low), repr(b.close), repr(b.volume)])


# ---------------------------------------------------------------- cleaning


def _session_grid(start: int, end: int, interval: int, cfg: CleaningConfig, days_with_data: set[int]) -> np.ndarray:
    open_s, close_s = _hhmm_seconds(cfg.session_open), _hhmm_seconds(cfg.session_close)
    slots = np.arange(open_s, close_s, interval, dtype=np.int64)
    grid = [day * 86400 + slots for day in sorted(days_with_data)]
    if not grid:
        return np.empty(0, dtype=np.int64)
    allts = np.concatenate(grid)
    return allts[(allts >= start) & (allts <= end)]


def align_and_clean(
    bars: Sequence[Bar],
    symbols: Sequence[str],
    interval_seconds: int,
    cfg: CleaningConfig | None = None,
) -> MarketPanel:
    """Put bars of several symbols on one time grid and fill small gaps.

    The grid spans from the latest first bar to the earliest last bar over
    the requested symbols. A symbol whose share of missing grid points
    exceeds ``cfg.max_gap_fraction`` is dropped; dropped symbols and fill
    counts are recorded under ``panel.meta["cleaning"]``.
    """
    cfg = cfg or CleaningConfig()
    if interval_seconds <= 0:
        raise DataError("non-positive interval")
    if not bars:
        raise DataError("empty bars")
    symbols = list(symbols)
    if len(set(symbols)) != len(symbols):
        raise DataError("duplicate symbol in request")

    by_symbol: dict[str, dict[int, Bar]] = {s: {} for s in symbols}
    for b in bars:
        if b.symbol not in by_symbol:
            continue
        if b.timestamp in by_symbol[b.symbol]:
            raise DataError(f"duplicate bar for {b.symbol} at {b.timestamp}")
        by_symbol[b.symbol][b.timestamp] = b
    absent = [s for s in symbols if not by_symbol[s]]
    if absent:
        raise DataError(f"requested symbol(s) absent from data: {absent}")

    start = max(min(d) for d in by_symbol.values())
    end = min(max(d) for d in by_symbol.values())
    if end < start:
        raise DataError("symbol coverage windows do not overlap")

    if cfg.session_calendar == "continuous-24x7":
        grid = np.arange(start, end + 1, interval_seconds, dtype=np.int64)
        periods_per_year = SECONDS_PER_YEAR / interval_seconds
    else:
        days = {b.timestamp // 86400 for d in by_symbol.values() for b in d.values()}
        grid = _session_grid(start, end, interval_seconds, cfg, days)
        per_session = len(range(_hhmm_seconds(cfg.session_open), _hhmm_seconds(cfg.session_close), interval_seconds))
        periods_per_year = float(TRADING_DAYS_PER_YEAR * per_session)
    if grid.size == 0:
        raise DataError("empty time grid")

    kept: list[str] = []
    dropped: dict[str, float] = {}
    filled: dict[str, int] = {}
    columns: list[np.ndarray] = []
    present_masks: list[np.ndarray] = []
    for sym in symbols:
        series = by_symbol[sym]
        present = np.array([int(t) in series for t in grid])
        gap_fraction = 1.0 - present.mean()
        if gap_fraction > cfg.max_gap_fraction:
            dropped[sym] = float(gap_fraction)
            logger.warning("dropping %s: gap fraction %.4f > %.4f", sym, gap_fraction, cfg.max_gap_fraction)
            continue
        # last known bar at or before the grid start seeds the forward fill
        prior = [t for t in series if t <= grid[0]]
        last_close = series[max(prior)].close if prior else None
        block = np.empty((grid.size, 5))
        for i, t in enumerate(grid):
            b = series.get(int(t))
            if b is not None:
                block[i] = (b.close, b.open, b.high, b.low, b.volume)
                last_close = b.close
            elif last_close is None:
                raise DataError(f"{sym}: no bar at or before grid start to fill from")
            else:
                block[i] = (last_close, last_close, last_close, last_close, 0.0)
        kept.append(sym)
        filled[sym] = int((~present).sum())
        columns.append(block)
        present_masks.append(present)

    if not kept:
        raise DataError("all symbols dropped", {"dropped": dropped})

    values = np.stack(columns, axis=1)
    if cfg.fill_policy == "drop-row":
        keep_rows = np.logical_and.reduce(present_masks)
        if not keep_rows.any():
            raise DataError("no rows with complete data across symbols")
        grid, values = grid[keep_rows], values[keep_rows]

    return MarketPanel(
        timestamps=grid,
        symbols=tuple(kept),
        feature_names=BASE_FEATURES,
        values=values,
        interval_seconds=int(interval_seconds),
        periods_per_year=float(periods_per_year),
        meta={"cleaning": {"dropped": dropped, "filled": filled}},
    )


def panel_to_bars(panel: MarketPanel) -> list[Bar]:
    bars = []
    for i, t in enumerate(panel.timestamps):
        for j, sym in enumerate(panel.symbols):
            c, o, h, l, v = panel.values[i, j, :5]
            bars.append(Bar(int(t), sym, float(o), float(h), float(l), float(c), float(v)))
    return bars


def split_panel(panel: MarketPanel, boundaries: Sequence[tuple]) -> list[MarketPanel]:
    """Cut contiguous sub-panels for inclusive ``(start, end)`` ranges.

    Range ends may be epoch seconds, datetimes or ISO dates; a bare end date
    includes that whole day.
    """
    spans = [(to_epoch(a), to_epoch(b, end_of_day=True)) for a, b in boundaries]
    for i, (a, b) in enumerate(spans):
        if b < a:
            raise DataError(f"range {i} ends before it starts: {boundaries[i]}")
        if i and a <= spans[i - 1][1]:
            raise DataError(
                f"overlapping or unordered ranges: {boundaries[i - 1]} and {boundaries[i]}",
                {"ranges": [list(map(str, boundaries[i - 1])), list(map(str, boundaries[i]))]},
            )
    out = []
    for (a, b), raw in zip(spans, boundaries):
        lo = int(np.searchsorted(panel.timestamps, a, side="left"))
        hi = int(np.searchsorted(panel.timestamps, b, side="right"))
        if hi <= lo:
            raise DataError(f"empty slice for range {raw}")
        out.append(panel.slice_rows(lo, hi))
    return out

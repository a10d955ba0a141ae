import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from marketverse.data import (
    Bar,
    CleaningConfig,
    MarketPanel,
    align_and_clean,
    load_csv,
    panel_to_bars,
    split_panel,
    to_epoch,
    write_csv,
)
from marketverse.errors import ConfigError, DataError

from helpers import make_panel

HEADER = "timestamp,symbol,open,high,low,close,volume\n"


def _bars(symbol, closes, t0=0, step=60, skip=()):
    return [Bar(t0 + i * step, symbol, c, c, c, c, 10.0) for i, c in enumerate(closes) if i not in skip]


class TestLoadCsv:
    def test_row_maps_to_bar(self, tmp_path):
        p = tmp_path / "a.csv"
        p.write_text(HEADER + "1622505600,BTC,100,105,99,104,12.5\n")
        (bar,) = load_csv(p)
        assert bar == Bar(1622505600, "BTC", 100.0, 105.0, 99.0, 104.0, 12.5)

    def test_ohlc_violation_reported(self, tmp_path):
        p = tmp_path / "a.csv"
        p.write_text(HEADER + "1622505600,BTC,100,99,98,104,1\n")
        with pytest.raises(DataError) as err:
            load_csv(p)
        assert "OHLC bounds violated" in err.value.details["rows"]["1"]

    def test_bad_row_numbers_collected(self, tmp_path):
        p = tmp_path / "a.csv"
        p.write_text(HEADER
                     + "1622505600,BTC,100,105,99,104,1\n"
                     + "1622505660,BTC,100,99,99,104,1\n"
                     + "1622505720,BTC,100,105,99,104,1\n")
        with pytest.raises(DataError) as err:
            load_csv(p)
        assert list(err.value.details["rows"]) == ["2"]

    def test_missing_file_and_column(self, tmp_path):
        with pytest.raises(DataError, match="missing file"):
            load_csv(tmp_path / "nope.csv")
        p = tmp_path / "a.csv"
        p.write_text("timestamp,symbol,open,high,low,close\n1,A,1,1,1,1\n")
        with pytest.raises(DataError, match="volume"):
            load_csv(p)

    def test_unparsable_timestamp(self, tmp_path):
        p = tmp_path / "a.csv"
        p.write_text(HEADER + "yesterday,BTC,1,1,1,1,1\n")
        with pytest.raises(DataError, match="rows \\[1\\]"):
            load_csv(p)

    def test_schema_remap_and_iso_timestamps(self, tmp_path):
        p = tmp_path / "a.csv"
        p.write_text("date,tic,o,h,l,c,v\n2021-06-01T00:00:00Z,X,1,2,1,2,3\n")
        schema = {"timestamp": "date", "symbol": "tic", "open": "o", "high": "h", "low": "l", "close": "c",
                  "volume": "v"}
        (bar,) = load_csv(p, schema)
        assert bar.timestamp == 1622505600 and bar.close == 2.0

    def test_duplicates_rejected(self, tmp_path):
        p = tmp_path / "a.csv"
        p.write_text(HEADER + "1,A,1,1,1,1,1\n1,A,1,1,1,1,1\n")
        with pytest.raises(DataError) as err:
            load_csv(p)
        assert "duplicate of row 1" in err.value.details["rows"]["2"]

    def test_write_then_read(self, tmp_path):
        bars = _bars("A", [1.5, 2.25, 3.125])
        write_csv(bars, tmp_path / "b.csv")
        assert load_csv(tmp_path / "b.csv") == bars


class TestAlign:
    def test_full_overlap_is_identity(self):
        closes = [100.0 + i for i in range(50)]
        bars = _bars("A", closes) + _bars("B", closes[::-1])
        panel = align_and_clean(bars, ["A", "B"], 60)
        assert panel.n_steps == 50
        assert panel.meta["cleaning"]["filled"] == {"A": 0, "B": 0}
        np.testing.assert_array_equal(panel.close[:, 0], closes)
        np.testing.assert_array_equal(panel.close[:, 1], closes[::-1])

    def test_single_gap_forward_filled(self):
        closes = [float(100 + i) for i in range(100)]
        bars = _bars("A", closes, skip={40}) + _bars("B", closes)
        panel = align_and_clean(bars, ["A", "B"], 60)
        assert panel.n_steps == 100
        row = panel.values[40, 0]
        assert panel.close[40, 0] == 139.0  # previous close
        np.testing.assert_array_equal(row[:4], [139.0] * 4)
        assert panel.feature("volume")[40, 0] == 0.0
        assert panel.meta["cleaning"]["filled"]["A"] == 1

    def test_sparse_symbol_dropped(self):
        closes = [float(100 + i) for i in range(100)]
        bars = _bars("A", closes, skip=set(range(10, 20))) + _bars("B", closes)
        panel = align_and_clean(bars, ["A", "B"], 60, CleaningConfig(max_gap_fraction=0.05))
        assert panel.symbols == ("B",)
        assert panel.meta["cleaning"]["dropped"] == {"A": pytest.approx(0.10)}

    def test_grid_is_coverage_intersection(self):
        bars = _bars("A", [1.0] * 10, t0=0) + _bars("B", [2.0] * 10, t0=180)
        panel = align_and_clean(bars, ["A", "B"], 60)
        assert panel.timestamps[0] == 180 and panel.timestamps[-1] == 540

    def test_errors(self):
        with pytest.raises(DataError, match="empty bars"):
            align_and_clean([], ["A"], 60)
        with pytest.raises(DataError, match="non-positive"):
            align_and_clean(_bars("A", [1.0]), ["A"], 0)
        with pytest.raises(DataError, match="all symbols dropped"):
            align_and_clean(_bars("A", [1.0] * 10, skip={3, 4, 5}), ["A"], 60, CleaningConfig(0.0))
        with pytest.raises(DataError, match="duplicate bar"):
            align_and_clean(_bars("A", [1.0, 2.0]) * 2, ["A"], 60)

    def test_drop_row_policy(self):
        bars = _bars("A", [1.0, 2.0, 3.0, 4.0], skip={1}) + _bars("B", [1.0] * 4)
        panel = align_and_clean(bars, ["A", "B"], 60, CleaningConfig(0.5, "drop-row"))
        assert list(panel.timestamps) == [0, 120, 180]

    def test_exchange_sessions(self):
        # two days of 30-minute bars between 14:30 and 21:00 UTC
        bars = []
        for day in range(2):
            base = day * 86400 + 14 * 3600 + 1800
            for k in range(13):
                bars.append(Bar(base + k * 1800, "A", 1.0, 1.0, 1.0, 1.0, 1.0))
        cfg = CleaningConfig(session_calendar="exchange-sessions")
        panel = align_and_clean(bars, ["A"], 1800, cfg)
        assert panel.n_steps == 26
        assert panel.periods_per_year == 252 * 13

    def test_config_bounds(self):
        with pytest.raises(ConfigError):
            CleaningConfig(max_gap_fraction=1.5)
        with pytest.raises(ConfigError):
            CleaningConfig(fill_policy="interpolate")

    @settings(max_examples=25, deadline=None)
    @given(st.lists(st.floats(1.0, 1e4), min_size=3, max_size=40), st.sets(st.integers(1, 38), max_size=3))
    def test_idempotent(self, closes, gaps):
        gaps = {g for g in gaps if g < len(closes) - 1}
        bars = _bars("A", closes, skip=gaps) + _bars("B", closes)
        once = align_and_clean(bars, ["A", "B"], 60, CleaningConfig(max_gap_fraction=0.5))
        twice = align_and_clean(panel_to_bars(once), list(once.symbols), 60, CleaningConfig(max_gap_fraction=0.5))
        np.testing.assert_array_equal(once.values, twice.values)
        np.testing.assert_array_equal(once.timestamps, twice.timestamps)

    def test_one_value_per_cell(self, rng):
        panel = align_and_clean(_bars("A", list(rng.uniform(1, 2, 30))), ["A"], 60)
        assert panel.values.shape == (30, 1, 5)
        assert np.isfinite(panel.values).all()


class TestPanel:
    def test_round_trip_bitwise(self, tmp_path, rng):
        panel = make_panel(rng.uniform(1, 100, (40, 3)))
        panel.save(tmp_path / "p")
        back = MarketPanel.load(tmp_path / "p")
        assert back.values.tobytes() == panel.values.tobytes()
        assert back.checksum() == panel.checksum()
        np.testing.assert_array_equal(back.timestamps, panel.timestamps)

    def test_load_rejects_truncated_tensor(self, tmp_path):
        panel = make_panel(np.ones((5, 2)))
        panel.save(tmp_path / "p")
        data = (tmp_path / "p" / "values.f64").read_bytes()
        (tmp_path / "p" / "values.f64").write_bytes(data[:-8])
        with pytest.raises(DataError, match="does not match"):
            MarketPanel.load(tmp_path / "p")

    def test_immutable(self):
        panel = make_panel(np.ones((3, 1)))
        with pytest.raises(ValueError):
            panel.values[0, 0, 0] = 2.0

    def test_invariants(self):
        with pytest.raises(DataError, match="close prices"):
            make_panel(np.zeros((3, 1)))
        with pytest.raises(DataError, match="NaN"):
            make_panel(np.array([1.0, np.nan]))


class TestSplit:
    def _summer(self):
        # one bar per day, 06/01 to 08/31 inclusive
        days = 92
        return make_panel(np.linspace(100, 120, days), interval=86400, t0=to_epoch("2021-06-01"))

    def test_paper_ranges_partition(self):
        panel = self._summer()
        train, valid = split_panel(panel, [("2021-06-01", "2021-08-14"), ("2021-08-15", "2021-08-31")])
        assert train.n_steps == 75 and valid.n_steps == 17
        np.testing.assert_array_equal(np.concatenate([train.timestamps, valid.timestamps]), panel.timestamps)
        assert train.symbols == panel.symbols and train.feature_names == panel.feature_names

    def test_whole_span_identity(self):
        panel = self._summer()
        (whole,) = split_panel(panel, [("2021-06-01", "2021-08-31")])
        assert whole.checksum() == panel.checksum()

    def test_outside_span_is_empty(self):
        with pytest.raises(DataError, match="empty slice"):
            split_panel(self._summer(), [("2022-01-01", "2022-01-31")])

    def test_overlap_rejected(self):
        with pytest.raises(DataError, match="overlapping"):
            split_panel(self._summer(), [("2021-06-01", "2021-07-01"), ("2021-07-01", "2021-08-01")])

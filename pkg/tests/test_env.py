import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from marketverse.env import (
    CostModel,
    EnvConfig,
    EnvState,
    PortfolioAllocationEnv,
    StockTradingEnv,
    make_env,
    portfolio_value,
    reset,
    softmax,
    step,
    step_allocation,
)
from marketverse.errors import ConfigError, EnvError
from marketverse.features import IndicatorSpec, add_indicators

from helpers import make_panel, random_walk

FLAT1 = CostModel("flat-fee", flat_fee=1.0, rate=0.0)
FREE = CostModel("per-share-percentage", rate=0.0)


class TestReset:
    def test_observation_dimension(self, rng):
        # N=30, K=4 -> 2 + 60 + 120
        panel = make_panel(random_walk(rng, 40, 30))
        specs = [IndicatorSpec("SMA", 5), IndicatorSpec("EMA", 5), IndicatorSpec("RSI", 5),
                 IndicatorSpec("ROLLING_VOL", 5)]
        env = StockTradingEnv(add_indicators(panel, specs), EnvConfig(initial_cash=1e6))
        obs = env.reset()
        assert obs.shape == (182,) and env.observation_dim == 182
        assert obs[0] == 1e6 and np.all(obs[1:31] == 0)

    def test_same_seed_same_observation(self, rng):
        env = StockTradingEnv(make_panel(random_walk(rng, 10, 2)))
        assert env.reset(3).tobytes() == env.reset(3).tobytes()

    def test_one_row_panel_rejected(self):
        with pytest.raises(EnvError, match="too short"):
            reset(make_panel(np.array([[10.0]])), EnvConfig())
        with pytest.raises(EnvError):
            StockTradingEnv(make_panel(np.array([10.0, 11.0, 12.0])), EnvConfig(start_step=2))

    def test_config_bounds(self):
        with pytest.raises(ConfigError):
            EnvConfig(initial_cash=0)
        with pytest.raises(ConfigError):
            EnvConfig(hmax=0)
        with pytest.raises(ConfigError):
            CostModel(rate=1.0)
        with pytest.raises(ConfigError):
            make_env("futures", make_panel(np.ones(3)))


class TestStockStep:
    def test_hand_accounting(self):
        panel = make_panel(np.array([10.0, 11.0]))
        cfg = EnvConfig(initial_cash=1000, hmax=5, cost_model=FLAT1)
        state, _ = reset(panel, cfg)
        state, reward, done, info = step(state, [1.0], panel, cfg)
        assert state.cash == 949.0 and list(state.holdings) == [5]
        assert info["value_before"] == 1000.0 and info["value"] == 1004.0
        assert reward == 4.0 and done

    def test_zero_action_holds(self):
        panel = make_panel(np.array([[10.0, 20.0], [12.0, 19.0], [12.0, 19.0]]))
        cfg = EnvConfig(initial_cash=1000, cost_model=FREE, reward_scaling=0.5)
        state = EnvState(0, 100.0, np.array([3, 2]))
        new, reward, _, _ = step(state, [0.0, 0.0], panel, cfg)
        assert list(new.holdings) == [3, 2] and new.cash == 100.0
        assert reward == pytest.approx((3 * 2 + 2 * -1) * 0.5)

    def test_sell_clipped_to_holdings(self):
        panel = make_panel(np.array([10.0, 10.0, 10.0]))
        cfg = EnvConfig(hmax=10, cost_model=FREE)
        state = EnvState(0, 0.0, np.array([3]))
        new, _, _, info = step(state, [-1.0], panel, cfg)
        assert list(new.holdings) == [0] and new.cash == 30.0
        assert list(info["executed"]) == [-3]

    def test_action_clipped_and_rounded(self):
        panel = make_panel(np.array([1.0, 1.0, 1.0]))
        cfg = EnvConfig(initial_cash=1e6, hmax=10, cost_model=FREE)
        state, _ = reset(panel, cfg)
        new, _, _, _ = step(state, [7.0], panel, cfg)
        assert list(new.holdings) == [10]
        new, _, _, _ = step(state, [0.26], panel, cfg)
        assert list(new.holdings) == [3]

    def test_buys_truncated_in_symbol_order(self):
        panel = make_panel(np.array([[10.0, 10.0], [10.0, 10.0], [10.0, 10.0]]))
        cfg = EnvConfig(initial_cash=150, hmax=10, cost_model=FREE)
        state, _ = reset(panel, cfg)
        new, _, _, _ = step(state, [1.0, 1.0], panel, cfg)
        assert list(new.holdings) == [10, 5] and new.cash == 0.0

    def test_sells_fund_buys(self):
        panel = make_panel(np.array([[10.0, 10.0], [10.0, 10.0], [10.0, 10.0]]))
        cfg = EnvConfig(hmax=4, cost_model=FREE)
        new, _, _, _ = step(EnvState(0, 0.0, np.array([0, 4])), [1.0, -1.0], panel, cfg)
        assert list(new.holdings) == [4, 0]

    def test_spread_prices(self):
        panel = make_panel(np.array([100.0, 100.0, 100.0]))
        cfg = EnvConfig(initial_cash=1000, hmax=2, cost_model=FREE, bid_ask_spread=0.01)
        state, _ = reset(panel, cfg)
        new, _, _, info = step(state, [1.0], panel, cfg)
        assert new.cash == pytest.approx(1000 - 2 * 101.0)
        assert info["slippage"] == pytest.approx(2.0)
        new, _, _, _ = step(new, [-1.0], panel, cfg)
        assert new.cash == pytest.approx(1000 - 202 + 198)

    def test_turbulence_liquidates_and_blocks_buys(self):
        close = np.array([[10.0, 10.0]] * 3)
        panel = make_panel(close, extra={"turbulence": [5.0, 0.0, 0.0]})
        cfg = EnvConfig(initial_cash=100, hmax=5, cost_model=FREE, turbulence_threshold=5.0)
        new, _, _, info = step(EnvState(0, 100.0, np.array([3, 0])), [1.0, 1.0], panel, cfg)
        assert info["turbulent"] and list(new.holdings) == [0, 0] and new.cash == 130.0
        calm, _, _, info = step(EnvState(1, 100.0, np.array([3, 0])), [1.0, 1.0], panel, cfg)
        assert not info["turbulent"] and list(calm.holdings) == [8, 5]

    def test_partial_liquidation_hook(self):
        panel = make_panel(np.array([10.0] * 3), extra={"turbulence": [9.0, 9.0, 9.0]})
        cfg = EnvConfig(hmax=5, cost_model=FREE, turbulence_threshold=1.0, liquidation_fraction=0.5)
        new, _, _, _ = step(EnvState(0, 0.0, np.array([5])), [0.0], panel, cfg)
        assert list(new.holdings) == [2]

    def test_step_after_done(self):
        env = StockTradingEnv(make_panel(np.array([1.0, 2.0])))
        env.reset()
        _, _, done, _ = env.step([0.0])
        assert done
        with pytest.raises(EnvError, match="finished"):
            env.step([0.0])
        with pytest.raises(EnvError, match="reset"):
            StockTradingEnv(make_panel(np.array([1.0, 2.0]))).step([0.0])

    def test_wrong_action_shape(self):
        env = StockTradingEnv(make_panel(np.ones((3, 2))))
        env.reset()
        with pytest.raises(EnvError, match="shape"):
            env.step([0.0])

    def test_class_matches_pure_core(self, rng):
        panel = make_panel(random_walk(rng, 30, 3))
        cfg = EnvConfig(initial_cash=1e4, hmax=20, cost_model=CostModel(rate=0.002), bid_ask_spread=0.001)
        env = StockTradingEnv(panel, cfg)
        obs = env.reset()
        state, obs2 = reset(panel, cfg)
        assert obs.tobytes() == obs2.tobytes()
        for _ in range(29):
            a = rng.uniform(-1, 1, 3)
            obs, r, done, _ = env.step(a)
            state, r2, _, _ = step(state, a, panel, cfg)
            assert r == r2 and env.value() == portfolio_value(state, panel)

    def test_reward_sum_equals_value_change(self, rng):
        panel = make_panel(random_walk(rng, 50, 2))
        env = StockTradingEnv(panel, EnvConfig(initial_cash=1e4, hmax=30, cost_model=CostModel(rate=0.001)))
        env.reset()
        total, done = 0.0, False
        while not done:
            _, r, done, _ = env.step(rng.uniform(-1, 1, 2))
            total += r
        assert total == pytest.approx(env.value() - 1e4, rel=1e-12, abs=1e-9)


@settings(max_examples=200, deadline=None)
@given(
    prices=st.lists(st.floats(0.5, 500.0), min_size=2, max_size=2),
    cash=st.floats(0.0, 5e3),
    holdings=st.lists(st.integers(0, 50), min_size=2, max_size=2),
    action=st.lists(st.floats(-3, 3), min_size=2, max_size=2),
    rate=st.floats(0, 0.05),
    fee=st.floats(0, 20),
    flat=st.booleans(),
    spread=st.floats(0, 0.05),
    turb=st.booleans(),
)
def test_accounting_properties(prices, cash, holdings, action, rate, fee, flat, spread, turb):
    panel = make_panel(np.array([prices, prices, prices]), extra={"turbulence": [1.0 if turb else 0.0] * 3})
    cm = CostModel("flat-fee", flat_fee=fee, rate=0.0) if flat else CostModel(rate=rate)
    cfg = EnvConfig(hmax=20, cost_model=cm, bid_ask_spread=spread, turbulence_threshold=0.5)
    state = EnvState(0, cash, np.array(holdings))
    new, _, _, info = step(state, action, panel, cfg)
    assert new.cash >= 0 and np.all(new.holdings >= 0)
    want = info["value_before"] - info["costs"] - info["slippage"]
    assert info["value_after_trade"] == pytest.approx(want, rel=1e-9, abs=1e-9)
    if turb:
        assert np.all(new.holdings <= state.holdings)


@settings(max_examples=30, deadline=None)
@given(st.lists(st.lists(st.floats(-1, 1), min_size=2, max_size=2), min_size=5, max_size=5))
def test_constant_prices_zero_reward(actions):
    panel = make_panel(np.full((6, 2), 7.0))
    env = StockTradingEnv(panel, EnvConfig(initial_cash=1000, hmax=10, cost_model=FREE))
    env.reset()
    for a in actions:
        _, r, _, _ = env.step(a)
        assert r == 0.0
    assert env.value() == 1000.0


class TestAllocation:
    def test_softmax_symmetry(self):
        np.testing.assert_allclose(softmax(np.zeros(4)), [0.25] * 4)

    def test_single_asset_log_return(self):
        panel = make_panel(np.array([[100.0, 50.0], [110.0, 50.0], [110.0, 50.0]]))
        cfg = EnvConfig(cost_model=FREE)
        state, _ = reset(panel, cfg, fractional=True)
        state, reward, _, _ = step_allocation(state, [50.0, -50.0], panel, cfg)
        assert reward == pytest.approx(math.log(1.1), rel=1e-12)

    def test_rebalance_cost(self):
        panel = make_panel(np.array([[1.0, 1.0]] * 3))
        cfg = EnvConfig(cost_model=CostModel(rate=0.001))
        state = EnvState(0, 0.0, np.array([1000.0, 0.0]))
        new, reward, _, info = step_allocation(state, [-50.0, 50.0], panel, cfg)
        assert info["turnover"] == pytest.approx(2000.0)
        assert info["costs"] == pytest.approx(0.001 * 2 * 1000)
        assert info["value"] == pytest.approx(1000 - 2.0)
        assert reward == pytest.approx(math.log(998 / 1000))

    def test_equal_weight_offsetting_returns(self):
        panel = make_panel(np.array([[1.0, 1.0], [1.1, 0.9], [1.1, 0.9]]))
        env = PortfolioAllocationEnv(panel, EnvConfig(initial_cash=100, cost_model=FREE))
        env.reset()
        _, reward, _, _ = env.step([0.0, 0.0])
        assert reward == pytest.approx(0.0, abs=1e-15)

    def test_turbulence_moves_to_cash(self):
        panel = make_panel(np.array([[1.0, 1.0], [2.0, 2.0]] * 2), extra={"turbulence": [3.0, 3.0, 0, 0]})
        cfg = EnvConfig(cost_model=FREE, turbulence_threshold=1.0)
        new, reward, _, _ = step_allocation(EnvState(0, 0.0, np.array([5.0, 5.0])), [0.0, 0.0], panel, cfg)
        assert new.cash == 10.0 and np.all(new.holdings == 0) and reward == 0.0

    def test_costs_exhausting_value(self):
        panel = make_panel(np.array([[1.0, 1.0]] * 3))
        cfg = EnvConfig(cost_model=CostModel("flat-fee", flat_fee=600.0))
        with pytest.raises(EnvError, match="exhaust"):
            step_allocation(EnvState(0, 0.0, np.array([1000.0, 0.0])), [-50.0, 50.0], panel, cfg)

    def test_accounting_identity(self, rng):
        panel = make_panel(random_walk(rng, 40, 3))
        cfg = EnvConfig(cost_model=CostModel(rate=0.003), bid_ask_spread=0.002)
        env = PortfolioAllocationEnv(panel, cfg)
        env.reset()
        for _ in range(39):
            _, _, _, info = env.step(rng.normal(size=3))
            want = info["value_before"] - info["costs"] - info["slippage"]
            assert info["value_after_trade"] == pytest.approx(want, rel=1e-12)


def test_portfolio_value_examples():
    panel = make_panel(np.array([[50.0], [11.0]]))
    assert portfolio_value(EnvState(0, 123.0, np.array([0])), panel) == 123.0
    assert portfolio_value(EnvState(0, 0.0, np.array([2])), panel) == 100.0
    assert portfolio_value(EnvState(1, 949.0, np.array([5])), panel) == 1004.0

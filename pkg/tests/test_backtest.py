import numpy as np
import pandas as pd
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from regimealloc import backtest
from regimealloc.allocation import StrategySpec
from regimealloc.backtest import RegimeInputs, compute_metrics, forecast_return_correlation, max_drawdown, replay

from conftest import make_panel


def weights_frame(panel, w):
    return pd.DataFrame(np.broadcast_to(w, (len(panel.dates), len(panel.assets))).copy(),
                        index=panel.dates, columns=panel.assets)


def test_max_drawdown_example():
    assert max_drawdown([1.2, 0.9, 1.1]) == pytest.approx(-0.25)


def test_buy_and_hold_single_asset_without_cost(rng):
    r = rng.normal(0, 0.01, 50)
    panel = make_panel(r)
    res = replay(weights_frame(panel, [1.0]), panel, cost=0.0)
    np.testing.assert_allclose(res.portfolio_returns, r, rtol=0, atol=1e-15)
    # only the initial entry from cash counts as a trade
    assert res.metrics.ann_turnover == pytest.approx(252 / 50)


def test_equal_returns_cause_no_drift():
    panel = make_panel(np.full((30, 2), 0.01))
    res = replay(weights_frame(panel, [0.5, 0.5]), panel, cost=0.0)
    assert np.abs(res.trades.to_numpy()[1:]).max() < 1e-15


def test_two_asset_drift_by_hand():
    panel = make_panel([[0.10, -0.05], [0.0, 0.0]], rf=0.01)
    res = replay(weights_frame(panel, [0.3, 0.5]), panel, cost=0.0)
    gross = 0.3 * 0.10 + 0.5 * -0.05 + 0.2 * 0.01
    expect = np.array([0.3 * 1.10, 0.5 * 0.95]) / (1 + gross)
    np.testing.assert_allclose(res.weights_pre.iloc[1], expect, rtol=1e-14)


@given(st.integers(0, 2**31))
def test_self_financing_and_costs_only_hurt(seed):
    rng = np.random.default_rng(seed)
    r = rng.normal(0, 0.02, (40, 3))
    panel = make_panel(r)
    w = rng.dirichlet(np.ones(4), 40)[:, :3]
    wf = pd.DataFrame(w, index=panel.dates, columns=panel.assets)
    free = replay(wf, panel, cost=0.0)
    np.testing.assert_allclose(free.wealth, np.cumprod(1 + (w * r).sum(axis=1)), rtol=1e-12)
    costly = replay(wf, panel, cost=0.0005)
    assert (costly.wealth.to_numpy() <= free.wealth.to_numpy() + 1e-15).all()
    # gap recursion: D_t = D_{t-1}(1 + g_t) + W_{t-1} c_t with W the costly wealth
    W0, Wa = free.wealth.to_numpy(), costly.wealth.to_numpy()
    g = free.portfolio_returns.to_numpy()
    c = costly.costs.to_numpy()
    D = W0 - Wa
    prevW = np.concatenate([[1.0], Wa[:-1]])
    prevD = np.concatenate([[0.0], D[:-1]])
    np.testing.assert_allclose(D, prevD * (1 + g) + prevW * c, atol=1e-13)


def test_metrics_examples():
    ex = np.tile([0.01, -0.01], 50)
    m = compute_metrics(ex, 0.0)
    assert abs(m.sharpe) < 1e-10
    m = compute_metrics(np.zeros(10), 0.0, np.full((10, 2), 0.5), np.full((10, 2), 0.5))
    assert np.isnan(m.sharpe) and m.ann_turnover == 0.0 and m.avg_leverage == 1.0
    assert m.to_dict()["sharpe"] is None
    m = compute_metrics([0.2, -0.25, 0.1 / 0.9], 0.0)
    assert m.mdd == pytest.approx(-0.25)
    assert m.calmar == pytest.approx(m.ann_excess_return / 0.25)


def test_forecast_correlation():
    rng = np.random.default_rng(0)
    real = pd.DataFrame(rng.normal(size=(30, 3)), columns=list("abc"))
    c = forecast_return_correlation(real, real)
    np.testing.assert_allclose(c, 1.0)
    c = forecast_return_correlation(-real, real)
    np.testing.assert_allclose(c, -1.0)
    flat = real.assign(a=1.0)
    assert np.isnan(forecast_return_correlation(flat, real)["a"])
    perm = forecast_return_correlation(real.iloc[::-1], real.iloc[::-1])["Overall"]
    assert perm == pytest.approx(1.0)


def test_run_uses_previous_day_information_and_risk_off(rng):
    r = rng.normal(0, 0.01, (300, 4))
    panel = make_panel(r, rf=0.0001)
    dates = panel.dates[200:]
    fc = pd.DataFrame(1, index=dates, columns=panel.assets)
    fc.iloc[:10] = 0  # risk-off for the first ten days
    inputs = RegimeInputs(fc, pd.DataFrame(0.001, index=dates, columns=panel.assets),
                          pd.DataFrame(-0.001, index=dates, columns=panel.assets))
    for kind in ("minvar", "minvar_regime", "mv", "mv_regime", "ew", "ew_regime"):
        res = backtest.run(StrategySpec(kind, kind), panel, inputs, (dates[0], dates[-1]))
        w = res.weights_post.to_numpy()
        assert len(res.dates) == 100
        if kind.endswith("regime"):
            assert (w[:10] == 0).all()
        assert (w >= -1e-8).all() and (w.sum(axis=1) <= 1 + 1e-8).all()
    # changing the last day's return cannot change any weight
    r2 = r.copy()
    r2[-1] += 0.05
    a = backtest.run(StrategySpec("mv", "mv"), panel, inputs, (dates[0], dates[-1]))
    b = backtest.run(StrategySpec("mv", "mv"), make_panel(r2, rf=0.0001), inputs, (dates[0], dates[-1]))
    assert np.array_equal(a.weights_post.to_numpy(), b.weights_post.to_numpy())


def test_run_rejects_forecast_gaps(rng):
    panel = make_panel(rng.normal(0, 0.01, (60, 4)))
    dates = panel.dates[30:]
    fc = pd.DataFrame(1, index=dates[1:], columns=panel.assets)
    with pytest.raises(Exception, match="gap"):
        backtest.run(StrategySpec("e", "ew_regime"), panel, RegimeInputs(fc), (dates[0], dates[-1]))


def test_daily_frame_columns(rng):
    panel = make_panel(rng.normal(0, 0.01, (5, 2)))
    res = replay(weights_frame(panel, [0.5, 0.5]), panel)
    cols = res.daily_frame().columns.tolist()
    assert cols == ["w_A0", "w_A1", "trade_A0", "trade_A1", "cost", "return", "wealth"]

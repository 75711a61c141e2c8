import numpy as np
import pytest
from hypothesis import given, strategies as st

from regimealloc.allocation import (
    StrategySpec, build_mu, fix_mix_default, default_strategies, sensitivity_strategies, target_weights,
)
from regimealloc.errors import ConfigError


def test_named_defaults():
    by = {s.kind: s for s in default_strategies()}
    assert (by["minvar"].gamma_risk, by["minvar"].gamma_trade) == (10.0, 0.0)
    assert (by["minvar_regime"].gamma_risk, by["minvar_regime"].gamma_trade) == (10.0, 1.0)
    assert (by["mv"].gamma_risk, by["mv"].gamma_trade) == (5.0, 0.0)
    assert (by["mv_regime"].gamma_risk, by["mv_regime"].gamma_trade) == (10.0, 1.0)
    assert all(s.min_bullish_count == 4 for s in default_strategies())
    assert len(default_strategies()) == 7
    names = [s.name for s in sensitivity_strategies()]
    assert len(names) == 5 and len(set(names)) == 5
    with pytest.raises(ConfigError):
        StrategySpec("x", "black_litterman")


def test_mu_examples():
    np.testing.assert_allclose(build_mu(StrategySpec("m", "minvar_regime"), [1, 0, 1]), [0.001, 0, 0.001])
    np.testing.assert_allclose(build_mu(StrategySpec("m", "minvar"), [1, 0, 1]), [0.001] * 3)
    spec = StrategySpec("m", "mv_regime")
    mu = build_mu(spec, [0, 1, 0, 1], bull_mean=[0.0007, 0.0007, 0.0, np.nan], bear_mean=[-0.0002, -0.0002, -0.003, 0.0])
    np.testing.assert_allclose(mu, [-0.001, 0.0007, -0.003, 0.0])
    np.testing.assert_allclose(build_mu(StrategySpec("m", "mv"), ewma_mu=[0.1, 0.2]), [0.1, 0.2])
    with pytest.raises(ValueError):
        build_mu(spec, [1, 0])


@given(st.lists(st.integers(0, 1), min_size=1, max_size=12),
       st.lists(st.floats(-0.01, 0.01), min_size=12, max_size=12))
def test_mv_regime_caps_only_bearish(f, means):
    n = len(f)
    mu = build_mu(StrategySpec("m", "mv_regime"), f, bull_mean=means[:n], bear_mean=means[:n])
    f = np.array(f)
    assert (mu[f == 0] <= -0.001).all()
    np.testing.assert_array_equal(mu[f == 1], np.array(means[:n])[f == 1])


def test_equal_weight_variants():
    np.testing.assert_allclose(target_weights(StrategySpec("e", "ew"), w_pre=np.zeros(12)), 1 / 12)
    f = np.array([1, 1, 1] + [0] * 9)
    assert (target_weights(StrategySpec("e", "ew_regime"), w_pre=np.zeros(12), forecasts=f) == 0).all()
    f = np.array([1] * 6 + [0] * 6)
    w = target_weights(StrategySpec("e", "ew_regime"), w_pre=np.zeros(12), forecasts=f)
    np.testing.assert_allclose(w, [1 / 6] * 6 + [0] * 6)


def test_fix_mix_table():
    w = fix_mix_default()
    assert w.sum() == pytest.approx(1.0)
    assert w[-3:].sum() == pytest.approx(0.40)
    with pytest.raises(ConfigError):
        fix_mix_default(["a", "b"])
    spec = StrategySpec("f", "fix_mix", fix_mix_weights=[0.6, 0.4])
    np.testing.assert_allclose(target_weights(spec, w_pre=np.zeros(2)), [0.6, 0.4])


@given(st.integers(0, 2**31), st.sampled_from(["minvar", "minvar_regime", "mv", "mv_regime"]))
def test_mvo_weights_respect_bounds_and_risk_off(seed, kind):
    rng = np.random.default_rng(seed)
    n = 6
    A = rng.normal(size=(n, n)) * 0.01
    sigma = A @ A.T + 1e-4 * np.eye(n)
    f = rng.integers(0, 2, n)
    spec = StrategySpec("s", kind)
    mu = build_mu(spec, f, bull_mean=rng.normal(0, 1e-3, n), bear_mean=rng.normal(0, 1e-3, n),
                  ewma_mu=rng.normal(0, 1e-3, n))
    w = target_weights(spec, mu=mu, sigma=sigma, w_pre=rng.dirichlet(np.ones(n)) * 0.9, forecasts=f)
    assert (w >= -1e-8).all() and (w <= 0.4 + 1e-8).all() and w.sum() <= 1 + 1e-8
    if spec.uses_regimes and f.sum() < 4:
        assert (w == 0).all()


def test_zero_one_kind_tracks_one_asset():
    spec = StrategySpec("z", "zero_one", asset="B")
    assert target_weights(spec, w_pre=np.zeros(2), forecasts=[0, 1], assets=["A", "B"]).tolist() == [0, 1]
    assert target_weights(spec, w_pre=np.zeros(2), forecasts=[1, 0], assets=["A", "B"]).tolist() == [0, 0]

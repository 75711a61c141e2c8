import numpy as np
import pandas as pd
import pytest

from regimealloc import pipeline
from regimealloc.errors import DataError, NumericalError

from conftest import compact_regime_config


def test_default_lambda_grid():
    grid = pipeline.default_lambda_grid()
    assert len(grid) == 17 and grid[0] == 0.0
    assert grid[1] == pytest.approx(0.1) and grid[-1] == pytest.approx(100.0)
    np.testing.assert_allclose(np.diff(np.log(grid[1:])), np.log(1000) / 15)


def test_zero_one_strategy_examples():
    out = pipeline.zero_one_strategy([1, 0], [0.01, -0.02], 0.0, 0.0005)
    np.testing.assert_allclose(out, [0.0095, -0.0005])
    r = np.array([0.01, -0.02, 0.03])
    np.testing.assert_allclose(pipeline.zero_one_strategy([1, 1, 1], r, 0.0, 0.0), r)
    np.testing.assert_allclose(pipeline.zero_one_strategy([0, 0, 0], r, 0.001, 0.0005), 0.001)
    with pytest.raises(DataError):
        pipeline.zero_one_strategy([1, 0], r, 0.0)


def test_pick_lambda_ties_and_undefined():
    assert pipeline.pick_lambda({0.5: 1.0}) == 0.5
    assert pipeline.pick_lambda({0.0: 1.0, 1.0: 1.0, 10.0: 0.5}) == 1.0
    assert pipeline.pick_lambda({0.0: 1.0, 5.0: float("nan")}) == 0.0
    with pytest.raises(NumericalError):
        pipeline.pick_lambda({0.0: float("nan")})


def test_schedule_partitions_window():
    sched = pipeline.WalkForwardSchedule(pd.Timestamp("2010-01-01"), pd.Timestamp("2012-03-15"))
    blocks = sched.blocks()
    assert [b[0].strftime("%Y-%m-%d") for b in blocks] == ["2010-01-01", "2010-07-01", "2011-01-01",
                                                           "2011-07-01", "2012-01-01"]
    assert all(a[1] == b[0] for a, b in zip(blocks[:-1], blocks[1:]))
    assert blocks[-1][1] == pd.Timestamp("2012-03-16")
    assert sched.training_start(blocks[0][0]) == pd.Timestamp("1999-01-01")


@pytest.fixture(scope="module")
def stage_inputs(small_universe):
    cfg = compact_regime_config()
    data = pipeline.prepare_assets(small_universe.panel, small_universe.macro, cfg)
    start = pipeline.earliest_test_start(small_universe.panel.dates[0], cfg)
    return cfg, data, start


def test_single_block_forecast_count(stage_inputs):
    cfg, data, start = stage_inputs
    end = start + pd.DateOffset(months=6) - pd.Timedelta(days=1)
    res = pipeline.run_asset(data["A0"], (start, end), cfg)
    assert len(res.history) == 1
    assert 120 <= len(res.forecasts.dates) <= 132
    assert res.history["lambda"].iloc[0] in cfg.lambda_grid


def test_halflife_zero_means_no_smoothing(stage_inputs):
    cfg, data, start = stage_inputs
    series = pipeline.generate_forecasts(data["A1"], 3.0, (start, start + pd.DateOffset(months=9)), cfg)
    f = series.frame
    assert np.array_equal(f["raw_prob"], f["smoothed_prob"])
    assert f.index.is_unique and f.index.is_monotonic_increasing
    assert ((f["raw_prob"] >= 0) & (f["raw_prob"] <= 1)).all()


def test_cache_shares_units_and_survives_disk_round_trip(stage_inputs, tmp_path):
    cfg, data, start = stage_inputs
    window = (start, start + pd.DateOffset(months=6))
    cold = pipeline.ForecastCache(tmp_path)
    a = pipeline.generate_forecasts(data["A2"], 3.0, window, cfg, cold)
    files = list(tmp_path.rglob("*.json"))
    assert files and files[0].relative_to(tmp_path).parts[0] == "A2"
    warm = pipeline.ForecastCache(tmp_path)
    b = pipeline.generate_forecasts(data["A2"], 3.0, window, cfg, warm)
    assert warm.misses == 0 and warm.hits > 0
    assert a.frame.equals(b.frame)


def test_insufficient_history_reports_shortfall(stage_inputs):
    cfg, data, start = stage_inputs
    early = data["A0"].dates[0] + pd.DateOffset(years=1)
    with pytest.raises(DataError, match="shortfall"):
        pipeline.generate_forecasts(data["A0"], 1.0, (early, early + pd.DateOffset(months=1)), cfg)


def test_stage_is_deterministic_and_causal(small_universe, stage_inputs):
    cfg, _, start = stage_inputs
    u = small_universe
    end = start + pd.DateOffset(months=9)
    one = pipeline.run_regime_stage(u.panel, u.macro, (start, end), cfg, assets=["A0", "A3"])
    two = pipeline.run_regime_stage(u.panel, u.macro, (start, end), cfg, assets=["A0", "A3"])
    f1 = one.forecast_frame("smoothed_prob")
    assert f1.equals(two.forecast_frame("smoothed_prob"))
    cut = f1.index[len(f1) // 2 + 3]
    short = pipeline.run_regime_stage(u.panel.truncate(cut), u.macro.truncate(cut), (start, end), cfg,
                                      assets=["A0", "A3"])
    f2 = short.forecast_frame("smoothed_prob")
    assert f2.index[-1] == cut
    assert f1.loc[:cut].equals(f2)
    inputs = one.regime_inputs()
    assert set(inputs.forecast.stack().unique()) <= {0, 1}
    assert list(one.lambda_history().columns[:4]) == ["asset", "refit_date", "lambda", "halflife"]


def test_forecast_series_exports(stage_inputs, tmp_path):
    cfg, data, start = stage_inputs
    s = pipeline.generate_forecasts(data["A0"], 3.0, (start, start + pd.DateOffset(months=2)), cfg, halflife=4)
    s.to_csv(tmp_path / "f.csv")
    back = pd.read_csv(tmp_path / "f.csv", index_col="date", parse_dates=True)
    assert list(back.columns) == ["raw_prob", "smoothed_prob", "forecast", "lambda_used", "bull_mean", "bear_mean"]
    assert '"smoothing_halflife": 4.0' in s.to_json()

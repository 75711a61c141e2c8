import json

import pandas as pd
import pytest
import yaml

from regimealloc import cli, config as config_mod
from regimealloc.allocation import default_strategies

COMPACT_REGIME = {"train_years": 3, "validation_years": 1, "lambda_grid": [0.0, 3.0, 30.0],
                  "halflife_candidates": [0, 4], "jm_restarts": 3, "corr_window": 63,
                  "gbdt": {"rounds": 15, "max_depth": 3}}


def _write(tmp_path, name, cfg):
    path = tmp_path / f"{name}.yaml"
    path.write_text(yaml.safe_dump(cfg))
    return str(path)


@pytest.fixture(scope="module")
def data_dir(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    cfg = _write(root, "sim", {"seed": 2, "simulate": {"T": 6 * 261}, "output_dir": str(root / "data")})
    assert cli.main(["simulate", "-c", cfg]) == 0
    return root / "data"


def _run_cfg(data_dir, out, **extra):
    cfg = {"output_dir": str(out), "regime": dict(COMPACT_REGIME),
           "data": {"returns": str(data_dir / "returns.csv"), "risk_free": str(data_dir / "riskfree.csv"),
                    "macro": str(data_dir / "macro.csv")},
           "strategies": [s.to_dict() for s in default_strategies(fix_mix_weights=[0.3, 0.3, 0.2, 0.2])]}
    cfg.update(extra)
    return cfg


def test_simulate_writes_files_and_is_reproducible(tmp_path, data_dir):
    names = {"returns.csv", "riskfree.csv", "macro.csv", "truth_states.csv"}
    assert names <= {p.name for p in data_dir.iterdir()}
    cfg = _write(tmp_path, "again", {"seed": 2, "simulate": {"T": 6 * 261}, "output_dir": str(tmp_path / "x" / "y")})
    assert cli.main(["simulate", "-c", cfg]) == 0
    for n in names:
        assert (tmp_path / "x" / "y" / n).read_bytes() == (data_dir / n).read_bytes()


def test_resolved_config_round_trips(tmp_path, data_dir):
    cfg = _write(tmp_path, "c", _run_cfg(data_dir, tmp_path / "out", seed=5))
    assert cli.main(["simulate", "-c", cfg]) == 0
    resolved = config_mod.load(tmp_path / "out" / "resolved_config.yaml")
    assert resolved.seed == 5 and resolved.regime.seed == 5 and resolved.simulate.seed == 5
    assert resolved.to_dict() == config_mod.load(cfg).to_dict()
    assert resolved.regime.lambda_grid == [0.0, 3.0, 30.0]


def test_print_defaults(capsys):
    assert cli.main(["simulate", "--print-defaults"]) == 0
    d = yaml.safe_load(capsys.readouterr().out)
    assert d["regime"]["refit_months"] == 6 and len(d["regime"]["lambda_grid"]) == 17


@pytest.mark.parametrize("cfg, code", [
    ({"bogus": 1}, 1),
    ({"regime": {"seed": 3}}, 1),
    ({"regime": {"lambda_grid": [-1.0]}}, 1),
    ({"strategies": []}, 1),
    ({"data": {"returns": "/nonexistent/r.csv", "macro": "/nonexistent/m.csv"}}, 2),
])
def test_exit_codes(tmp_path, cfg, code, capsys):
    cfg = {"output_dir": str(tmp_path / "o"), **cfg}
    assert cli.main(["backtest", "-c", _write(tmp_path, "bad", cfg)]) == code
    if cfg.get("strategies") == []:
        assert "no strategies configured" in capsys.readouterr().err


def test_malformed_yaml_and_bad_command(tmp_path):
    p = tmp_path / "m.yaml"
    p.write_text("a: [1, 2\n")
    assert cli.main(["tune", "-c", str(p)]) == 1
    with pytest.raises(SystemExit) as exc:
        cli.main(["frobnicate"])
    assert exc.value.code == 1


def test_tune_reports_history_shortfall(tmp_path, data_dir, capsys):
    cfg = _run_cfg(data_dir, tmp_path / "o", test_start="2001-06-01")
    assert cli.main(["tune", "-c", _write(tmp_path, "t", cfg)]) == 2
    assert "shortfall" in capsys.readouterr().err


def test_tune_then_backtest_and_report(tmp_path, data_dir):
    out = tmp_path / "run"
    cfg = _run_cfg(data_dir, out, cache_dir=str(tmp_path / "cache"))
    path = _write(tmp_path, "r", cfg)
    assert cli.main(["tune", "-c", path]) == 0
    hist = pd.read_csv(out / "lambda_history.csv")
    assert set(hist["lambda"]) == {0.0, 3.0, 30.0}
    assert (hist.groupby(["asset", "refit_date"])["chosen"].sum() == 1).all()
    assert sorted(p.name for p in (out / "forecasts").iterdir()) == ["A0.csv", "A1.csv", "A2.csv", "A3.csv"]

    # the second stage run is served from the disk cache
    assert cli.main(["backtest", "-c", path]) == 0
    log = (out / "run.log").read_text().splitlines()
    assert "misses 0" in [l for l in log if "regime stage finished" in l][-1]

    metrics = json.loads((out / "metrics.json").read_text())
    assert set(metrics) == {s.name for s in default_strategies()}
    assert cli.main(["report", "-c", path]) == 0
    report = json.loads((out / "report.json").read_text())
    for name, m in metrics.items():
        for k, v in m.items():
            assert report[name][k] == pytest.approx(v, rel=1e-9, abs=1e-12, nan_ok=True)
    corr = pd.read_csv(out / "forecast_correlation.csv", index_col="asset")
    assert "Overall" in corr.index and {"MV", "MV(regime)"} <= set(corr.columns)


def test_report_without_backtest(tmp_path):
    cfg = _write(tmp_path, "r", {"output_dir": str(tmp_path / "empty")})
    assert cli.main(["report", "-c", cfg]) == 2

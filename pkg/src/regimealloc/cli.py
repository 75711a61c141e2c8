"""Command-line entry point: simulate, tune, backtest, report.

Exit codes: 0 success, 1 usage or config error, 2 data error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import re
import sys
import time
from pathlib import Path

import numpy as np
import pandas as pd

from regimealloc import allocation, backtest, config as config_mod, pipeline, synthgen
from regimealloc.errors import ConfigError, DataError, NumericalError
from regimealloc.market_data import IngestConfig, load_macro_panel, load_return_panel

log = logging.getLogger("regimealloc")


def _setup_logging(out: Path) -> None:
    # timestamps live only in the log file so report files stay byte-stable
    out.mkdir(parents=True, exist_ok=True)
    root = logging.getLogger()
    for h in list(root.handlers):
        if getattr(h, "_regimealloc", False):
            root.removeHandler(h)
    fh = logging.FileHandler(out / "run.log")
    fh.setFormatter(logging.Formatter("%(asctime)s %(levelname)s %(name)s: %(message)s"))
    fh._regimealloc = True
    root.addHandler(fh)
    root.setLevel(logging.INFO)


def _slug(name: str) -> str:
    return re.sub(r"[^A-Za-z0-9.=-]+", "_", name).strip("_")


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2) + "\n")


def load_data(cfg: config_mod.RunConfig):
    d = cfg.data
    if not d.returns or not d.macro:
        raise ConfigError("data.returns and data.macro must be set")
    try:
        panel = load_return_panel(d.returns, IngestConfig(kind=d.kind, risk_free_column=d.risk_free_column,
                                                          risk_free_path=d.risk_free))
        macro = load_macro_panel(d.macro)
    except FileNotFoundError as exc:
        raise DataError(str(exc)) from exc
    if cfg.universe is not None:
        missing = [a for a in cfg.universe if a not in panel.assets]
        if missing:
            raise ConfigError(f"universe assets not in the data: {missing}")
        panel = type(panel)(panel.returns[list(cfg.universe)], panel.risk_free)
    return panel, macro


def testing_window(cfg: config_mod.RunConfig, panel) -> tuple[pd.Timestamp, pd.Timestamp]:
    earliest = pipeline.earliest_test_start(panel.dates[0], cfg.regime)
    start = earliest if cfg.test_start is None else pd.Timestamp(cfg.test_start)
    end = panel.dates[-1] if cfg.test_end is None else pd.Timestamp(cfg.test_end)
    if start < earliest:
        need = start - pd.DateOffset(years=cfg.regime.train_years + cfg.regime.validation_years)
        raise DataError(f"insufficient history: testing from {start.date()} needs data from {need.date()}, "
                        f"first date is {panel.dates[0].date()} (shortfall {(panel.dates[0] - need).days} days)")
    if end < start or end > panel.dates[-1]:
        raise DataError(f"testing window {start.date()}..{end.date()} outside the data span "
                        f"{panel.dates[0].date()}..{panel.dates[-1].date()}")
    return start, end


def _regime_stage(cfg, panel, macro, window):
    cache = pipeline.ForecastCache(cfg.cache_dir)
    t0 = time.time()
    stage = pipeline.run_regime_stage(panel, macro, window, cfg.regime, cache=cache)
    log.info("regime stage finished in %.1fs (cache hits %d, misses %d)", time.time() - t0,
             cache.hits, cache.misses)
    return stage


def _lambda_report(stage: pipeline.RegimeStageResult) -> pd.DataFrame:
    rows = []
    for a in stage.assets:
        for _, h in stage.per_asset[a].history.iterrows():
            for col in h.index:
                if col.startswith("sharpe["):
                    lam = float(col[len("sharpe["):-1])
                    rows.append({"asset": a, "refit_date": h["refit_date"], "lambda": lam,
                                 "validation_sharpe": h[col], "chosen": lam == h["lambda"],
                                 "halflife": h["halflife"]})
    return pd.DataFrame(rows, columns=["asset", "refit_date", "lambda", "validation_sharpe", "chosen", "halflife"])


def _write_stage(out: Path, stage: pipeline.RegimeStageResult) -> None:
    _lambda_report(stage).to_csv(out / "lambda_history.csv", index=False, float_format="%.17g")
    fdir = out / "forecasts"
    fdir.mkdir(exist_ok=True)
    for a in stage.assets:
        stage.per_asset[a].forecasts.to_csv(fdir / f"{_slug(a)}.csv")
    _write_json(out / "halflife.json", stage.halflives)


def cmd_simulate(cfg: config_mod.RunConfig) -> int:
    out = Path(cfg.output_dir)
    uni = synthgen.generate(cfg.simulate)
    paths = uni.write_csv(out)
    print(f"wrote {', '.join(p.name for p in paths.values())} to {out}")
    print(uni.summary().round(3).to_string())
    return 0


def cmd_tune(cfg: config_mod.RunConfig) -> int:
    out = Path(cfg.output_dir)
    panel, macro = load_data(cfg)
    window = testing_window(cfg, panel)
    stage = _regime_stage(cfg, panel, macro, window)
    _write_stage(out, stage)
    hist = stage.lambda_history()
    print(hist[["asset", "refit_date", "lambda", "halflife"]].to_string(index=False))
    return 0


def _strategy_list(cfg: config_mod.RunConfig, assets) -> list[allocation.StrategySpec]:
    specs = list(cfg.strategies)
    if cfg.sensitivity.enabled:
        specs += allocation.sensitivity_strategies(cfg.sensitivity.gamma_trade, cfg.sensitivity.gamma_risk)
    if not specs:
        raise ConfigError("no strategies configured")
    for s in specs:
        if s.kind == "fix_mix" and s.fix_mix_weights is None:
            allocation.fix_mix_default(assets)  # raises for non-standard universes
    return specs


def cmd_backtest(cfg: config_mod.RunConfig) -> int:
    out = Path(cfg.output_dir)
    if not cfg.strategies and not cfg.sensitivity.enabled:
        raise ConfigError("no strategies configured")
    panel, macro = load_data(cfg)
    specs = _strategy_list(cfg, panel.assets)
    window = testing_window(cfg, panel)
    inputs = None
    if any(s.uses_regimes for s in specs):
        stage = _regime_stage(cfg, panel, macro, window)
        _write_stage(out, stage)
        inputs = stage.regime_inputs()
    ddir = out / "daily"
    ddir.mkdir(exist_ok=True)
    metrics, index, corr = {}, {}, {}
    for spec in specs:
        try:
            res = backtest.run(spec, panel, inputs, window, cfg.cost)
        except (DataError, NumericalError, ConfigError) as exc:
            raise type(exc)(f"strategy {spec.name}: {exc}") from exc
        metrics[spec.name] = res.metrics.to_dict()
        fname = f"{_slug(spec.name)}.csv"
        index[spec.name] = fname
        frame = res.daily_frame()
        frame.insert(len(frame.columns) - 2, "risk_free", res.risk_free)
        frame.to_csv(ddir / fname, float_format="%.17g", date_format="%Y-%m-%d")
        if res.mu is not None:
            realized = panel.excess().loc[res.dates]
            corr[spec.name] = backtest.forecast_return_correlation(res.mu, realized)
        log.info("%s: sharpe %s", spec.name, res.metrics.sharpe)
    _write_json(out / "metrics.json", metrics)
    _write_json(ddir / "index.json", index)
    if corr:
        table = pd.DataFrame(corr)
        table.index.name = "asset"
        table.to_csv(out / "forecast_correlation.csv", float_format="%.17g")
    print(pd.DataFrame(metrics).round(4).to_string())
    return 0


def cmd_report(cfg: config_mod.RunConfig) -> int:
    """Recompute the metric table from stored daily CSVs."""
    out = Path(cfg.output_dir)
    ddir = out / "daily"
    idx_path = ddir / "index.json"
    if not idx_path.exists():
        raise DataError(f"no stored backtest in {out} (missing daily/index.json)")
    index = json.loads(idx_path.read_text())
    metrics = {}
    for name, fname in index.items():
        f = pd.read_csv(ddir / fname, index_col="date", parse_dates=True)
        wcols = [c for c in f.columns if c.startswith("w_")]
        w = f[wcols].to_numpy()
        pre = w - f[["trade_" + c[2:] for c in wcols]].to_numpy()
        m = backtest.compute_metrics(f["return"].to_numpy(), f["risk_free"].to_numpy(), w, pre)
        metrics[name] = m.to_dict()
    _write_json(out / "report.json", metrics)
    print(pd.DataFrame(metrics).round(4).to_string())
    return 0


COMMANDS = {"simulate": cmd_simulate, "tune": cmd_tune, "backtest": cmd_backtest, "report": cmd_report}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="regimealloc", description="Regime-switching asset allocation.")
    p.add_argument("command", choices=sorted(COMMANDS))
    p.add_argument("-c", "--config", help="YAML run configuration (defaults apply to missing keys)")
    p.add_argument("-o", "--output-dir", help="override output_dir")
    p.add_argument("--print-defaults", action="store_true", help="print the default config and exit")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.print_defaults:
        print(config_mod.yaml.safe_dump(config_mod.default_dict(), sort_keys=False))
        return 0
    try:
        cfg = config_mod.load(args.config) if args.config else config_mod.from_dict({})
        if args.output_dir:
            cfg.output_dir = args.output_dir
        out = Path(cfg.output_dir)
        _setup_logging(out)
        cfg.dump(out / "resolved_config.yaml")
        return COMMANDS[args.command](cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 2
    except (NumericalError, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3
    except ValueError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())

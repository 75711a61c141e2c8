"""Walk-forward regime forecasting with nested jump-penalty selection.

Every six months (a "block"), for each asset and jump penalty:

1. fit the jump model on standardized return features over the trailing
   training window,
2. shift the fitted labels forward one day and train the boosted-trees
   classifier on return + macro features over the same window,
3. emit bull probabilities for each day of the block from the previous
   day's features.

The penalty used for a block is the one whose 0/1 strategy had the best Sharpe
over the preceding validation window, itself produced by the same walk-forward
procedure. Units are cached by (asset, block, penalty) so validation and
out-of-sample runs share fits.
"""

from __future__ import annotations

import hashlib
import json
import logging
import math
import os
import tempfile
import threading
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd

from regimealloc import gbdt, jump_model
from regimealloc.backtest import RegimeInputs
from regimealloc.errors import DataError, NumericalError
from regimealloc.features import (
    CORR_WINDOW, FeatureMatrix, macro_features, return_features, select_jm_features, standardize,
)
from regimealloc.market_data import TRADING_DAYS, MacroPanel, ReturnPanel, ewm_mean

log = logging.getLogger(__name__)


def default_lambda_grid() -> list[float]:
    return [0.0] + np.logspace(-1, 2, 16).tolist()


@dataclass
class RegimeConfig:
    refit_months: int = 6
    train_years: int = 11
    validation_years: int = 5
    lambda_grid: list[float] = field(default_factory=default_lambda_grid)
    halflife_candidates: list[float] = field(default_factory=lambda: [0, 2, 4, 8])
    smoothing_halflife: dict[str, float] = field(default_factory=dict)  # fixed per-asset values skip selection
    exclude_dd: list[str] = field(default_factory=list)  # assets whose JM drops the DD features
    jm_restarts: int = 10
    jm_max_iter: int = 100
    seed: int = 0
    gbdt: gbdt.GBDTParams = field(default_factory=gbdt.GBDTParams)
    cost: float = 0.0005
    threshold: float = 0.5
    corr_window: int = CORR_WINDOW
    feature_warmup: int = 21  # leading panel rows never used for training
    n_jobs: int = 1

    @property
    def validation_blocks(self) -> int:
        months = 12 * self.validation_years
        if months % self.refit_months:
            raise ValueError("validation window must be a whole number of refit intervals")
        return months // self.refit_months

    def to_dict(self) -> dict:
        return asdict(self)

    def fingerprint(self) -> str:
        keys = ("train_years", "jm_restarts", "jm_max_iter", "seed", "corr_window", "feature_warmup")
        d = {k: getattr(self, k) for k in keys}
        d["gbdt"] = asdict(self.gbdt)
        return json.dumps(d, sort_keys=True)


# ---------------------------------------------------------------------------
# data preparation


@dataclass
class AssetData:
    asset: str
    dates: pd.DatetimeIndex
    returns: np.ndarray
    risk_free: np.ndarray
    excess: np.ndarray
    jm_features: pd.DataFrame  # raw return features fed to the jump model
    clf_features: np.ndarray  # return + macro features, T x 13
    clf_names: list[str]


def prepare_assets(panel: ReturnPanel, macro: MacroPanel, config: RegimeConfig,
                   assets=None) -> dict[str, AssetData]:
    assets = panel.assets if assets is None else list(assets)
    unknown = [a for a in assets if a not in panel.assets]
    if unknown:
        raise DataError(f"assets not in the return panel: {unknown}")
    mac = macro_features(macro, config.corr_window).frame.reindex(panel.dates)
    excess = panel.excess()
    rf = panel.risk_free.to_numpy()
    out = {}
    for a in assets:
        feats = return_features(excess[a])
        jm = select_jm_features(feats, a in config.exclude_dd).frame
        clf = pd.concat([feats.frame, mac], axis=1)
        out[a] = AssetData(a, panel.dates, panel.returns[a].to_numpy(), rf, excess[a].to_numpy(),
                           jm, np.ascontiguousarray(clf.to_numpy()), list(clf.columns))
    return out


# ---------------------------------------------------------------------------
# schedule


def block_starts(anchor, count: int, first: int = 0, months: int = 6) -> list[pd.Timestamp]:
    """Refit dates ``anchor + months * i`` for i in [first, first + count)."""
    anchor = pd.Timestamp(anchor)
    return [anchor + pd.DateOffset(months=months * i) for i in range(first, first + count)]


@dataclass
class WalkForwardSchedule:
    start: pd.Timestamp
    end: pd.Timestamp
    refit_months: int = 6
    train_years: int = 11

    def refit_dates(self, last_date=None) -> list[pd.Timestamp]:
        stop = self.end if last_date is None else min(self.end, pd.Timestamp(last_date))
        out = []
        i = 0
        while True:
            g = pd.Timestamp(self.start) + pd.DateOffset(months=self.refit_months * i)
            if g > stop:
                return out
            out.append(g)
            i += 1

    def blocks(self, last_date=None) -> list[tuple[pd.Timestamp, pd.Timestamp]]:
        """Half-open [start, end) blocks partitioning the window through ``last_date``."""
        starts = self.refit_dates(last_date)
        stop = self.end + pd.Timedelta(days=1)
        return [(g, min(g + pd.DateOffset(months=self.refit_months), stop)) for g in starts]

    def training_start(self, refit_date) -> pd.Timestamp:
        return pd.Timestamp(refit_date) - pd.DateOffset(years=self.train_years)


# ---------------------------------------------------------------------------
# one (asset, penalty, block) unit


@dataclass
class BlockForecast:
    asset: str
    block_start: pd.Timestamp
    lam: float
    dates: pd.DatetimeIndex
    raw_prob: np.ndarray
    bull_mean: float
    bear_mean: float
    n_train: int
    fingerprint: str = ""

    def to_dict(self) -> dict:
        nz = lambda v: None if not math.isfinite(v) else v  # noqa: E731
        return {
            "asset": self.asset,
            "block_start": self.block_start.strftime("%Y-%m-%d"),
            "lambda": self.lam,
            "dates": [d.strftime("%Y-%m-%d") for d in self.dates],
            "raw_prob": self.raw_prob.tolist(),
            "bull_mean": nz(self.bull_mean),
            "bear_mean": nz(self.bear_mean),
            "n_train": self.n_train,
            "fingerprint": self.fingerprint,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "BlockForecast":
        nan = lambda v: float("nan") if v is None else float(v)  # noqa: E731
        return cls(d["asset"], pd.Timestamp(d["block_start"]), float(d["lambda"]),
                   pd.DatetimeIndex(pd.to_datetime(d["dates"])), np.asarray(d["raw_prob"], dtype=float),
                   nan(d["bull_mean"]), nan(d["bear_mean"]), int(d["n_train"]), d["fingerprint"])


def _slices(data: AssetData, start, end, train_years: int, warmup: int = 0):
    """Index ranges of the training window and of the prediction dates in [start, end).

    The first ``warmup`` panel rows are skipped: before the first negative return
    the downside deviation sits at its floor and its log is an extreme outlier.
    """
    start, end = pd.Timestamp(start), pd.Timestamp(end)
    train_start = start - pd.DateOffset(years=train_years)
    if data.dates[0] > train_start:
        short = (data.dates[0] - train_start).days
        raise DataError(f"{data.asset}: insufficient history for the block starting {start.date()}; "
                        f"need data from {train_start.date()}, have from {data.dates[0].date()} "
                        f"(shortfall {short} days)")
    d = data.dates
    i0 = max(int(d.searchsorted(train_start, side="left")), warmup)
    i1 = int(d.searchsorted(start, side="left"))
    p1 = int(d.searchsorted(end, side="left"))
    return i0, i1, p1


def _unit_fingerprint(data: AssetData, i0: int, i1: int, p1: int, config: RegimeConfig) -> str:
    h = hashlib.sha256(config.fingerprint().encode())
    h.update(",".join(data.jm_features.columns).encode())
    h.update(np.ascontiguousarray(data.jm_features.to_numpy()[i0:i1]).tobytes())
    h.update(data.excess[i0:i1].tobytes())
    h.update(data.clf_features[i0:max(i1, p1 - 1)].tobytes())
    h.update(data.dates[i1:p1].asi8.tobytes())
    return h.hexdigest()


def fit_block(data: AssetData, lam: float, start, end, config: RegimeConfig,
              classifier_memo: dict | None = None) -> BlockForecast:
    """Train on the window before ``start`` and forecast every date in [start, end)."""
    i0, i1, p1 = _slices(data, start, end, config.train_years, config.feature_warmup)
    if i1 - i0 < 3:
        raise DataError(f"{data.asset}: training window before {pd.Timestamp(start).date()} has {i1 - i0} rows")
    fp = _unit_fingerprint(data, i0, i1, p1, config)
    raw = FeatureMatrix(data.jm_features.iloc[i0:i1])
    X = standardize(raw, np.ones(i1 - i0, dtype=bool)).values
    fit = jump_model.fit(X, K=2, lam=lam, restarts=config.jm_restarts, seed=config.seed,
                         returns=data.excess[i0:i1], max_iter=config.jm_max_iter)
    states = fit.states
    # target for row t is the regime of day t+1 (1 = bullish)
    y = (states[1:] == jump_model.BULL).astype(float)
    pred_rows = np.arange(i1, p1) - 1
    Xp = data.clf_features[pred_rows]
    if len(pred_rows) and not np.isfinite(Xp).all():
        bad = data.dates[pred_rows[~np.isfinite(Xp).all(axis=1)][0]]
        raise DataError(f"{data.asset}: classifier features unavailable on {bad.date()}")
    # identical labels on identical inputs give an identical classifier
    memo_key = hashlib.sha1(y.tobytes()).hexdigest()
    if classifier_memo is not None and memo_key in classifier_memo:
        prob = classifier_memo[memo_key]
    else:
        prob = _classify_block(data.clf_features[i0:i1 - 1], y, Xp, config.gbdt)
        if classifier_memo is not None:
            classifier_memo[memo_key] = prob
    stats = fit.regime_stats
    return BlockForecast(data.asset, pd.Timestamp(start), float(lam), data.dates[i1:p1], prob,
                         float(stats.mean[0]), float(stats.mean[1]), i1 - i0, fp)


def _classify_block(Xtr, y, Xp, params) -> np.ndarray:
    ok = np.isfinite(Xtr).all(axis=1)
    Xtr, y = Xtr[ok], y[ok]
    if len(y) == 0:
        raise DataError("no classifier training rows with complete features")
    if y.min() == y.max():
        # one regime throughout training: the forecast is that regime
        return np.full(len(Xp), float(y[0]))
    if len(Xp) == 0:
        return np.zeros(0)
    model = gbdt.train(Xtr, y, params)
    return gbdt.predict_proba(model, Xp)


class ForecastCache:
    """Insert-or-get store of block forecasts, in memory and optionally on disk.

    Disk layout is ``<dir>/<asset>/<block-start>/<lambda>.json``; entries whose
    fingerprint no longer matches the inputs are recomputed.
    """

    def __init__(self, directory=None):
        self.directory = None if directory is None else Path(directory)
        self._mem: dict = {}
        self._lock = threading.Lock()
        self._classifiers: dict = {}
        self.hits = 0
        self.misses = 0

    def _path(self, asset, start, lam) -> Path:
        return self.directory / str(asset) / pd.Timestamp(start).strftime("%Y-%m-%d") / f"{float(lam)!r}.json"

    def get(self, data: AssetData, lam: float, start, end, config: RegimeConfig) -> BlockForecast:
        i0, i1, p1 = _slices(data, start, end, config.train_years, config.feature_warmup)
        fp = _unit_fingerprint(data, i0, i1, p1, config)
        key = (data.asset, pd.Timestamp(start), float(lam), fp)
        with self._lock:
            if key in self._mem:
                self.hits += 1
                return self._mem[key]
        unit = None
        if self.directory is not None:
            path = self._path(data.asset, start, lam)
            if path.exists():
                cached = BlockForecast.from_dict(json.loads(path.read_text()))
                if cached.fingerprint == fp:
                    unit = cached
                    self.hits += 1
        if unit is None:
            self.misses += 1
            memo = self._classifiers.setdefault(fp, {})
            try:
                unit = fit_block(data, lam, start, end, config, memo)
            except (DataError, NumericalError, ValueError) as exc:
                raise type(exc)(f"{data.asset}, block {pd.Timestamp(start).date()}, lambda {lam:g}: {exc}") from exc
            if self.directory is not None:
                self._write(self._path(data.asset, start, lam), unit)
        with self._lock:
            return self._mem.setdefault(key, unit)

    @staticmethod
    def _write(path: Path, unit: BlockForecast) -> None:
        path.parent.mkdir(parents=True, exist_ok=True)
        fd, tmp = tempfile.mkstemp(dir=path.parent, suffix=".tmp")
        with os.fdopen(fd, "w") as fh:
            json.dump(unit.to_dict(), fh)
        os.replace(tmp, path)


# ---------------------------------------------------------------------------
# forecasts and the 0/1 strategy


@dataclass
class RegimeForecastSeries:
    asset: str
    frame: pd.DataFrame  # raw_prob, smoothed_prob, forecast, lambda_used, bull_mean, bear_mean
    smoothing_halflife: float

    @property
    def dates(self) -> pd.DatetimeIndex:
        return self.frame.index

    @property
    def forecast(self) -> pd.Series:
        return self.frame["forecast"]

    def to_csv(self, path) -> None:
        self.frame.to_csv(path, index_label="date", float_format="%.17g")

    def to_json(self) -> str:
        f = self.frame.reset_index()
        f["date"] = f["date"].dt.strftime("%Y-%m-%d")
        body = json.loads(f.to_json(orient="records", double_precision=15))
        return json.dumps({"asset": self.asset, "smoothing_halflife": self.smoothing_halflife, "rows": body})


def assemble(asset: str, units: list[BlockForecast], halflife: float, threshold: float = 0.5
             ) -> RegimeForecastSeries:
    """Concatenate block forecasts, smooth continuously across blocks and threshold."""
    if not units:
        raise DataError(f"{asset}: no forecast blocks")
    dates = units[0].dates.append([u.dates for u in units[1:]]) if len(units) > 1 else units[0].dates
    if dates.has_duplicates or not dates.is_monotonic_increasing:
        raise DataError(f"{asset}: forecast blocks overlap or are out of order")
    raw = np.concatenate([u.raw_prob for u in units])
    rep = lambda attr: np.concatenate([np.full(len(u.dates), getattr(u, attr)) for u in units])  # noqa: E731
    smooth = ewm_mean(raw, halflife) if len(raw) else raw
    frame = pd.DataFrame({
        "raw_prob": raw,
        "smoothed_prob": smooth,
        "forecast": gbdt.classify(smooth, threshold),
        "lambda_used": rep("lam"),
        "bull_mean": rep("bull_mean"),
        "bear_mean": rep("bear_mean"),
    }, index=pd.DatetimeIndex(dates, name="date"))
    return RegimeForecastSeries(asset, frame, float(halflife))


def zero_one_strategy(forecast, asset_returns, risk_free, cost: float = 0.0005) -> np.ndarray:
    """Daily net returns of holding the asset when bullish and cash otherwise, entered from cash."""
    pos = np.asarray(forecast, dtype=float)
    r = np.asarray(asset_returns, dtype=float)
    rf = np.broadcast_to(np.asarray(risk_free, dtype=float), r.shape)
    if pos.shape != r.shape:
        raise DataError("forecasts and returns are misaligned")
    trades = np.abs(np.diff(pos, prepend=0.0))
    return pos * r + (1.0 - pos) * rf - cost * trades


def sharpe_ratio(excess) -> float:
    x = np.asarray(excess, dtype=float)
    if len(x) < 2:
        return float("nan")
    sd = x.std(ddof=1)
    if not sd > 0:
        return float("nan")
    return float(math.sqrt(TRADING_DAYS) * x.mean() / sd)


def _strategy_sharpe(data: AssetData, series: RegimeForecastSeries, cost: float) -> float:
    pos = data.dates.get_indexer(series.dates)
    net = zero_one_strategy(series.frame["forecast"].to_numpy(), data.returns[pos], data.risk_free[pos], cost)
    return sharpe_ratio(net - data.risk_free[pos])


def generate_forecasts(data: AssetData, lam: float, window, config: RegimeConfig,
                       cache: ForecastCache | None = None, halflife: float = 0.0) -> RegimeForecastSeries:
    """Walk-forward forecasts over ``window`` = (start, end inclusive) under one penalty."""
    cache = cache or ForecastCache()
    sched = WalkForwardSchedule(pd.Timestamp(window[0]), pd.Timestamp(window[1]),
                                config.refit_months, config.train_years)
    units = [cache.get(data, lam, g, e, config) for g, e in sched.blocks(data.dates[-1])]
    return assemble(data.asset, units, halflife, config.threshold)


def validation_sharpes(data: AssetData, refit_date, config: RegimeConfig, cache: ForecastCache,
                       halflife: float, grid=None) -> dict[float, float]:
    """0/1-strategy Sharpe per penalty over the validation window ending at ``refit_date``."""
    grid = config.lambda_grid if grid is None else grid
    V = config.validation_blocks
    starts = block_starts(refit_date, V + 1, first=-V, months=config.refit_months)
    out = {}
    for lam in grid:
        units = [cache.get(data, lam, g, e, config) for g, e in zip(starts[:-1], starts[1:])]
        series = assemble(data.asset, units, halflife, config.threshold)
        out[float(lam)] = _strategy_sharpe(data, series, config.cost)
    return out


def pick_lambda(sharpes: dict[float, float]) -> float:
    """Highest Sharpe; exact ties go to the larger penalty; undefined values are skipped."""
    best_lam, best = None, -math.inf
    for lam in sorted(sharpes):
        s = sharpes[lam]
        if math.isfinite(s) and s >= best:
            best_lam, best = lam, s
    if best_lam is None:
        raise NumericalError("validation Sharpe undefined for every penalty")
    return best_lam


def select_lambda(data: AssetData, refit_date, config: RegimeConfig, cache: ForecastCache | None = None,
                  halflife: float = 0.0, grid=None) -> float:
    cache = cache or ForecastCache()
    return pick_lambda(validation_sharpes(data, refit_date, config, cache, halflife, grid))


def select_halflife(data: AssetData, refit_date, config: RegimeConfig, cache: ForecastCache) -> tuple[float, dict]:
    """Smoothing halflife with the best validation Sharpe over all penalties; ties -> shorter."""
    table = {}
    for hl in config.halflife_candidates:
        table[float(hl)] = validation_sharpes(data, refit_date, config, cache, hl)
    best_hl, best = None, -math.inf
    for hl in sorted(table):
        vals = [s for s in table[hl].values() if math.isfinite(s)]
        if vals and max(vals) > best:
            best_hl, best = hl, max(vals)
    if best_hl is None:
        raise NumericalError(f"{data.asset}: validation Sharpe undefined for every halflife")
    return best_hl, table


# ---------------------------------------------------------------------------
# full stage


@dataclass
class AssetStageResult:
    forecasts: RegimeForecastSeries
    history: pd.DataFrame  # one row per refit: chosen lambda and Sharpe per grid point
    halflife_table: dict
    cache_hits: int = 0
    cache_misses: int = 0


@dataclass
class RegimeStageResult:
    assets: list[str]
    per_asset: dict[str, AssetStageResult]

    def forecast_frame(self, column: str = "forecast") -> pd.DataFrame:
        return pd.DataFrame({a: self.per_asset[a].forecasts.frame[column] for a in self.assets})

    def regime_inputs(self) -> RegimeInputs:
        return RegimeInputs(self.forecast_frame("forecast"), self.forecast_frame("bull_mean"),
                            self.forecast_frame("bear_mean"))

    def lambda_history(self) -> pd.DataFrame:
        return pd.concat([self.per_asset[a].history for a in self.assets], ignore_index=True)

    @property
    def halflives(self) -> dict[str, float]:
        return {a: self.per_asset[a].forecasts.smoothing_halflife for a in self.assets}


def run_asset(data: AssetData, window, config: RegimeConfig, cache: ForecastCache | None = None
              ) -> AssetStageResult:
    cache = cache or ForecastCache()
    sched = WalkForwardSchedule(pd.Timestamp(window[0]), pd.Timestamp(window[1]),
                                config.refit_months, config.train_years)
    blocks = sched.blocks(data.dates[-1])
    if not blocks:
        raise DataError(f"{data.asset}: testing window has no data")
    if data.asset in config.smoothing_halflife:
        hl, hl_table = float(config.smoothing_halflife[data.asset]), {}
    else:
        hl, hl_table = select_halflife(data, blocks[0][0], config, cache)
    units, rows = [], []
    for g, e in blocks:
        sharpes = validation_sharpes(data, g, config, cache, hl)
        lam = pick_lambda(sharpes)
        units.append(cache.get(data, lam, g, e, config))
        row = {"asset": data.asset, "refit_date": g.strftime("%Y-%m-%d"), "lambda": lam, "halflife": hl}
        row.update({f"sharpe[{k!r}]": v for k, v in sharpes.items()})
        rows.append(row)
    series = assemble(data.asset, units, hl, config.threshold)
    return AssetStageResult(series, pd.DataFrame(rows), hl_table, cache.hits, cache.misses)


def _run_asset_job(args):
    data, window, config, cache_dir = args
    return run_asset(data, window, config, ForecastCache(cache_dir))


def run_regime_stage(panel: ReturnPanel, macro: MacroPanel, window, config: RegimeConfig | None = None,
                     assets=None, cache: ForecastCache | None = None) -> RegimeStageResult:
    """Per-asset out-of-sample forecasts with penalties re-selected at every refit.

    Needs training plus validation history (16 years by default) before the window.
    """
    config = config or RegimeConfig()
    data = prepare_assets(panel, macro, config, assets)
    names = list(data)
    if config.n_jobs > 1 and len(names) > 1:
        cache_dir = None if cache is None else cache.directory
        jobs = [(data[a], window, config, cache_dir) for a in names]
        with ProcessPoolExecutor(max_workers=config.n_jobs) as pool:
            results = list(pool.map(_run_asset_job, jobs))
        per = dict(zip(names, results))
    else:
        cache = cache or ForecastCache()
        per = {a: run_asset(data[a], window, config, cache) for a in names}
    for a in names:
        log.info("%s: halflife %s, lambdas %s", a, per[a].forecasts.smoothing_halflife,
                 per[a].history["lambda"].tolist())
    return RegimeStageResult(names, per)


def earliest_test_start(first_date, config: RegimeConfig) -> pd.Timestamp:
    """First refit date with full training and validation history behind it."""
    return pd.Timestamp(first_date) + pd.DateOffset(years=config.train_years + config.validation_years)

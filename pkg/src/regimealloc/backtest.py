"""Daily cost-aware backtester and the portfolio metric set.

Timing: row t of the output covers trading day t. Weights held over day t were
chosen at the close of day t-1 from information through that close, so the
day-t return is earned by ``weights_post[t]``. Trades are measured against the
pre-trade weights, i.e. the previous holdings drifted through day t-1.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np
import pandas as pd

from regimealloc.allocation import MVO_KINDS, StrategySpec, build_mu, target_weights
from regimealloc.errors import DataError
from regimealloc.market_data import TRADING_DAYS, ReturnPanel, ewm_covariance_path, ewm_mean

DEFAULT_COST = 0.0005


@dataclass
class MetricSet:
    ann_excess_return: float
    ann_excess_volatility: float
    sharpe: float
    sortino: float
    mdd: float
    calmar: float
    ann_turnover: float
    avg_leverage: float

    def to_dict(self) -> dict:
        # undefined metrics are NaN in memory and null on disk
        return {k: (None if isinstance(v, float) and not math.isfinite(v) else v) for k, v in asdict(self).items()}


@dataclass
class BacktestResult:
    dates: pd.DatetimeIndex
    weights_post: pd.DataFrame
    weights_pre: pd.DataFrame
    trades: pd.DataFrame
    costs: pd.Series
    portfolio_returns: pd.Series  # net total return
    risk_free: pd.Series
    wealth: pd.Series
    metrics: MetricSet
    mu: pd.DataFrame | None = None
    name: str = ""
    extra: dict = field(default_factory=dict)

    @property
    def excess_returns(self) -> pd.Series:
        return self.portfolio_returns - self.risk_free

    def daily_frame(self) -> pd.DataFrame:
        parts = [
            self.weights_post.add_prefix("w_"),
            self.trades.add_prefix("trade_"),
            pd.DataFrame({"cost": self.costs, "return": self.portfolio_returns, "wealth": self.wealth}),
        ]
        out = pd.concat(parts, axis=1)
        out.index.name = "date"
        return out

    def to_csv(self, path) -> None:
        self.daily_frame().to_csv(path, float_format="%.17g")

    def metrics_json(self) -> str:
        return json.dumps(self.metrics.to_dict(), indent=2)


def drift(weights: np.ndarray, asset_returns: np.ndarray, gross_return: float) -> np.ndarray:
    """Weights after one day of returns with no trading."""
    return weights * (1.0 + asset_returns) / (1.0 + gross_return)


def gross_return(weights: np.ndarray, asset_returns: np.ndarray, rf: float) -> float:
    return float(weights @ asset_returns + (1.0 - weights.sum()) * rf)


def _account(weights_post: np.ndarray, returns: np.ndarray, rf: np.ndarray, cost: float):
    T, N = weights_post.shape
    pre = np.zeros((T, N))
    costs = np.zeros(T)
    net = np.zeros(T)
    held = np.zeros(N)
    for t in range(T):
        w = weights_post[t]
        costs[t] = cost * np.abs(w - held).sum()
        g = gross_return(w, returns[t], rf[t])
        net[t] = g - costs[t]
        held = drift(w, returns[t], g)
        if t + 1 < T:
            pre[t + 1] = held
    return pre, costs, net


def replay(weights_post: pd.DataFrame, panel: ReturnPanel, cost: float = DEFAULT_COST,
           name: str = "") -> BacktestResult:
    """Account a given post-trade weight path over the dates it covers, starting from cash."""
    dates = weights_post.index
    missing = dates.difference(panel.dates)
    if len(missing):
        raise DataError(f"no returns for {len(missing)} weight dates, first {missing[0].date()}")
    r = panel.returns.loc[dates, weights_post.columns].to_numpy()
    rf = panel.risk_free.loc[dates].to_numpy()
    w = weights_post.to_numpy(dtype=float)
    pre, costs, net = _account(w, r, rf, cost)
    return _result(name, dates, weights_post.columns, w, pre, costs, net, rf)


def _result(name, dates, assets, w, pre, costs, net, rf, mu=None) -> BacktestResult:
    wealth = np.cumprod(1.0 + net)
    metrics = compute_metrics(net, rf, w, pre)
    frame = lambda a: pd.DataFrame(a, index=dates, columns=assets)  # noqa: E731
    return BacktestResult(
        dates=dates,
        weights_post=frame(w),
        weights_pre=frame(pre),
        trades=frame(w - pre),
        costs=pd.Series(costs, index=dates, name="cost"),
        portfolio_returns=pd.Series(net, index=dates, name="return"),
        risk_free=pd.Series(rf, index=dates, name="risk_free"),
        wealth=pd.Series(wealth, index=dates, name="wealth"),
        metrics=metrics,
        mu=None if mu is None else frame(mu),
        name=name,
    )


@dataclass
class RegimeInputs:
    """Per-date, per-asset regime forecasts (1 = bullish) and regime mean excess returns."""

    forecast: pd.DataFrame
    bull_mean: pd.DataFrame | None = None
    bear_mean: pd.DataFrame | None = None


def run(spec: StrategySpec, panel: ReturnPanel, regimes: RegimeInputs | None, window,
        cost: float = DEFAULT_COST) -> BacktestResult:
    """Simulate one strategy over ``window`` = (start, end), inclusive dates."""
    start, end = pd.Timestamp(window[0]), pd.Timestamp(window[1])
    all_dates = panel.dates
    in_win = (all_dates >= start) & (all_dates <= end)
    idx = np.flatnonzero(in_win)
    if len(idx) == 0:
        raise DataError("backtest window contains no trading days")
    if idx[0] == 0:
        raise DataError("backtest window must start after the first panel date")
    dates = all_dates[idx]
    assets = panel.assets
    N = len(assets)
    R = panel.returns.to_numpy()
    RF = panel.risk_free.to_numpy()
    X = panel.excess().to_numpy()

    fc = bull = bear = None
    if spec.uses_regimes or spec.kind == "mv_regime":
        if regimes is None:
            raise DataError(f"{spec.name}: regime forecasts required")
        fc = _aligned(regimes.forecast, dates, assets, "forecast")
        if spec.kind == "mv_regime":
            if regimes.bull_mean is None or regimes.bear_mean is None:
                raise DataError(f"{spec.name}: regime return tables required")
            bull = regimes.bull_mean.reindex(index=dates, columns=assets).to_numpy()
            bear = regimes.bear_mean.reindex(index=dates, columns=assets).to_numpy()
    cov = ewma_mu = None
    if spec.kind in MVO_KINDS:
        hist = X[: idx[-1]]
        cov = ewm_covariance_path(hist, spec.covariance_halflife)
        if spec.kind == "mv":
            ewma_mu = np.column_stack([ewm_mean(hist[:, j], spec.mu_halflife) for j in range(N)])

    T = len(idx)
    w_post = np.zeros((T, N))
    mu_path = np.full((T, N), np.nan) if spec.kind in ("mv", "mv_regime") else None
    held = np.zeros(N)
    for t, p in enumerate(idx):
        prev = p - 1  # last close with known information
        f = fc[t] if fc is not None else None
        mu = sigma = None
        if spec.kind in MVO_KINDS:
            sigma = cov[prev]
            if not np.isfinite(sigma).all():
                raise DataError("not enough history for the covariance estimate")
            mu = build_mu(spec, forecasts=f if f is not None else np.ones(N, dtype=int),
                          bull_mean=None if bull is None else bull[t],
                          bear_mean=None if bear is None else bear[t],
                          ewma_mu=None if ewma_mu is None else ewma_mu[prev])
            if mu_path is not None:
                mu_path[t] = mu
        try:
            w = target_weights(spec, mu=mu, sigma=sigma, w_pre=held, forecasts=f, assets=assets, cost_a=cost)
        except Exception as exc:
            raise type(exc)(f"{spec.name} on {dates[t].date()}: {exc}") from exc
        w_post[t] = w
        g = gross_return(w, R[p], RF[p])
        held = drift(w, R[p], g)

    r = R[idx]
    rf = RF[idx]
    pre, costs, net = _account(w_post, r, rf, cost)
    return _result(spec.name, dates, assets, w_post, pre, costs, net, rf, mu_path)


def _aligned(frame: pd.DataFrame, dates, assets, what: str) -> np.ndarray:
    missing = [a for a in assets if a not in frame.columns]
    if missing:
        raise DataError(f"{what} missing assets {missing}")
    sub = frame.reindex(index=dates, columns=assets)
    if sub.isna().any().any():
        bad = sub.index[sub.isna().any(axis=1)][0]
        raise DataError(f"{what} has a gap at {bad.date()}")
    return sub.to_numpy().astype(int)


def max_drawdown(wealth) -> float:
    """Worst peak-to-trough loss, with the starting wealth of 1 counting as a peak."""
    w = np.concatenate([[1.0], np.asarray(wealth, dtype=float)])
    return float(np.min(w / np.maximum.accumulate(w) - 1.0))


def _std(x: np.ndarray) -> float:
    return float(np.std(x, ddof=1)) if len(x) > 1 else float("nan")


def compute_metrics(net_returns, risk_free, weights_post=None, weights_pre=None) -> MetricSet:
    """Annualized metrics from daily net total returns.

    Calmar divides the annualized excess return by |MDD|, which is what the
    reference performance tables report.
    """
    net = np.asarray(net_returns, dtype=float)
    rf = np.broadcast_to(np.asarray(risk_free, dtype=float), net.shape)
    if len(net) == 0:
        raise ValueError("empty return series")
    ex = net - rf
    T = len(net)
    ann_ret = TRADING_DAYS * ex.mean()
    sd = _std(ex)
    ann_vol = math.sqrt(TRADING_DAYS) * sd
    sharpe = ann_ret / ann_vol if ann_vol > 0 else float("nan")
    down = math.sqrt(TRADING_DAYS * np.mean(np.minimum(ex, 0.0) ** 2))
    sortino = ann_ret / down if down > 0 else float("nan")
    mdd = max_drawdown(np.cumprod(1.0 + net))
    calmar = ann_ret / abs(mdd) if mdd < 0 else float("nan")
    turnover = lev = float("nan")
    if weights_post is not None:
        wp = np.asarray(weights_post, dtype=float)
        lev = float(wp.sum(axis=1).mean())
        if weights_pre is not None:
            turnover = TRADING_DAYS / T * float(np.abs(wp - np.asarray(weights_pre, dtype=float)).sum())
    return MetricSet(float(ann_ret), float(ann_vol), float(sharpe), float(sortino), mdd, float(calmar),
                     turnover, lev)


def _corr(a: np.ndarray, b: np.ndarray) -> float:
    ok = np.isfinite(a) & np.isfinite(b)
    a, b = a[ok], b[ok]
    if len(a) < 2:
        return float("nan")
    a = a - a.mean()
    b = b - b.mean()
    saa, sbb = a @ a, b @ b
    if saa <= 1e-300 or sbb <= 1e-300:
        return float("nan")
    return float(np.clip((a @ b) / math.sqrt(saa * sbb), -1.0, 1.0))


def forecast_return_correlation(mu_series: pd.DataFrame, realized: pd.DataFrame) -> pd.Series:
    """Pearson correlation per asset plus a pooled ``Overall`` value; NaN flags undefined."""
    assets = list(mu_series.columns)
    real = realized.reindex(index=mu_series.index, columns=assets)
    out = {a: _corr(mu_series[a].to_numpy(float), real[a].to_numpy(float)) for a in assets}
    out["Overall"] = _corr(mu_series.to_numpy(float).ravel(), real.to_numpy(float).ravel())
    return pd.Series(out, name="correlation")

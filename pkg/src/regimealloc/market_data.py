"""Return/macro panels, CSV ingestion and exponentially weighted estimators."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Literal

import numpy as np
import pandas as pd
from scipy.signal import lfilter

from regimealloc.errors import DataError

TRADING_DAYS = 252
COV_RIDGE = 1e-10

MACRO_COLUMNS = ("yield_2y", "yield_slope_10y_2y", "vix_level", "stock_returns", "bond_returns")


@dataclass(frozen=True)
class ReturnPanel:
    """Aligned simple returns (dates x assets) plus a per-day risk-free return."""

    returns: pd.DataFrame
    risk_free: pd.Series

    def __post_init__(self):
        idx = self.returns.index
        if not isinstance(idx, pd.DatetimeIndex):
            raise DataError("returns must be indexed by a DatetimeIndex")
        if not idx.is_monotonic_increasing or idx.has_duplicates:
            raise DataError("dates must be strictly increasing")
        if not self.risk_free.index.equals(idx):
            raise DataError("risk_free must share the returns index")
        values = self.returns.to_numpy(dtype=float)
        if not np.isfinite(values).all() or not np.isfinite(self.risk_free.to_numpy(dtype=float)).all():
            raise DataError("returns contain missing or non-finite values")
        if (values <= -1.0).any():
            raise DataError("every simple return must exceed -1")

    @property
    def dates(self) -> pd.DatetimeIndex:
        return self.returns.index

    @property
    def assets(self) -> list[str]:
        return list(self.returns.columns)

    def excess(self) -> pd.DataFrame:
        return self.returns.sub(self.risk_free, axis=0)

    def truncate(self, end) -> "ReturnPanel":
        """Keep rows dated on or before ``end``."""
        mask = self.dates <= pd.Timestamp(end)
        return ReturnPanel(self.returns.loc[mask], self.risk_free.loc[mask])


@dataclass(frozen=True)
class MacroPanel:
    """Source series for the cross-asset macro features."""

    series: pd.DataFrame

    def __post_init__(self):
        missing = [c for c in MACRO_COLUMNS if c not in self.series.columns]
        if missing:
            raise DataError(f"macro panel missing columns: {missing}")
        vix = self.series["vix_level"].to_numpy(dtype=float)
        if (vix[np.isfinite(vix)] <= 0).any():
            raise DataError("vix_level must be strictly positive")

    @property
    def dates(self) -> pd.DatetimeIndex:
        return self.series.index

    def truncate(self, end) -> "MacroPanel":
        return MacroPanel(self.series.loc[self.dates <= pd.Timestamp(end)])


@dataclass
class IngestConfig:
    kind: Literal["levels", "returns"] = "returns"
    risk_free_column: str | None = "risk_free"
    risk_free_path: str | None = None


def annual_to_daily(yield_pct) -> np.ndarray:
    """Annualized percent yield -> per-day simple return, geometric over 252 days."""
    y = np.asarray(yield_pct, dtype=float) / 100.0
    return (1.0 + y) ** (1.0 / TRADING_DAYS) - 1.0


def _read_dated_csv(path) -> pd.DataFrame:
    df = pd.read_csv(path, float_precision="round_trip")
    if df.columns[0] != "date":
        raise DataError(f"{path}: first column must be 'date'")
    try:
        dates = pd.to_datetime(df["date"], format="ISO8601")
    except (ValueError, TypeError) as exc:
        raise DataError(f"{path}: unparseable dates") from exc
    body = df.drop(columns="date")
    try:
        body = body.apply(pd.to_numeric, errors="raise")
    except (ValueError, TypeError) as exc:
        raise DataError(f"{path}: non-numeric cell ({exc})") from exc
    body.index = pd.DatetimeIndex(dates, name="date")
    if not body.index.is_monotonic_increasing or body.index.has_duplicates:
        raise DataError(f"{path}: dates are not strictly increasing")
    return body.astype(float)


def _trim_leading_gaps(df: pd.DataFrame, what: str) -> pd.DataFrame:
    complete = df.notna().all(axis=1).to_numpy()
    if not complete.any():
        raise DataError(f"{what}: no complete rows")
    df = df.iloc[int(np.argmax(complete)):]
    if df.isna().any().any():
        bad = df.index[df.isna().any(axis=1)][0]
        raise DataError(f"{what}: missing interior value at {bad.date()}")
    return df


def load_return_panel(path, config: IngestConfig | None = None) -> ReturnPanel:
    """Read a dated CSV of asset levels or returns plus annualized percent risk-free yields."""
    config = config or IngestConfig()
    df = _read_dated_csv(path)
    if config.risk_free_path is not None:
        rf_df = _read_dated_csv(config.risk_free_path)
        col = config.risk_free_column if config.risk_free_column in rf_df.columns else rf_df.columns[0]
        rf = rf_df[col].reindex(df.index)
        assets = df
    else:
        if config.risk_free_column not in df.columns:
            raise DataError(f"{path}: risk-free column {config.risk_free_column!r} not found")
        rf = df[config.risk_free_column]
        assets = df.drop(columns=config.risk_free_column)
    frame = assets.assign(__rf__=rf)
    frame = _trim_leading_gaps(frame, str(path))
    if len(frame) < 2:
        raise DataError(f"{path}: fewer than 2 rows")
    rf_daily = pd.Series(annual_to_daily(frame.pop("__rf__")), index=frame.index, name="risk_free")
    if config.kind == "levels":
        levels = frame.to_numpy()
        if (levels <= 0).any():
            raise DataError(f"{path}: index levels must be positive")
        rets = levels[1:] / levels[:-1] - 1.0
        frame = pd.DataFrame(rets, index=frame.index[1:], columns=frame.columns)
        rf_daily = rf_daily.iloc[1:]
    elif config.kind != "returns":
        raise DataError(f"unknown data kind {config.kind!r}")
    return ReturnPanel(frame, rf_daily)


def load_macro_panel(path) -> MacroPanel:
    df = _read_dated_csv(path)
    return MacroPanel(df)


def ewm_mean(x, halflife: float) -> np.ndarray:
    """Adjusted exponentially weighted mean with decay 2**(-1/halflife).

    Leading NaNs are passed through; halflife 0 returns the input unchanged.
    """
    x = np.asarray(x, dtype=float)
    if halflife < 0:
        raise ValueError("halflife must be non-negative")
    if halflife == 0:
        return x.copy()
    out = np.full(x.shape, np.nan)
    finite = np.isfinite(x)
    if not finite.any():
        return out
    start = int(np.argmax(finite))
    if not finite[start:].all():
        raise ValueError("ewm_mean: missing value after the first observation")
    beta = 2.0 ** (-1.0 / halflife)
    seg = x[start:]
    num = lfilter([1.0], [1.0, -beta], seg)
    den = lfilter([1.0], [1.0, -beta], np.ones_like(seg))
    out[start:] = num / den
    return out


def _ewm_weights(n: int, halflife: float) -> np.ndarray:
    beta = 2.0 ** (-1.0 / halflife)
    return beta ** np.arange(n - 1, -1, -1, dtype=float)


def ewm_covariance(panel: ReturnPanel, halflife: float, as_of, ridge: float = COV_RIDGE) -> np.ndarray:
    """EW covariance of excess returns through ``as_of`` (inclusive), plus a diagonal ridge."""
    excess = panel.excess()
    x = excess.loc[excess.index <= pd.Timestamp(as_of)].to_numpy()
    if len(x) < 2:
        raise DataError("ewm_covariance needs at least 2 observations")
    return weighted_covariance(x, _ewm_weights(len(x), halflife), ridge)


def weighted_covariance(x: np.ndarray, weights: np.ndarray, ridge: float = 0.0) -> np.ndarray:
    w = weights / weights.sum()
    m = w @ x
    d = x - m
    cov = (d * w[:, None]).T @ d
    cov = 0.5 * (cov + cov.T)
    return cov + ridge * np.eye(x.shape[1])


def ewm_covariance_path(excess: np.ndarray, halflife: float, ridge: float = COV_RIDGE) -> np.ndarray:
    """EW covariance for every prefix of ``excess`` (T x N) -> (T x N x N).

    Recursive moments; agrees with :func:`weighted_covariance` on each prefix.
    Row 0 is NaN (a single observation has no covariance).
    """
    x = np.asarray(excess, dtype=float)
    T, N = x.shape
    beta = 2.0 ** (-1.0 / halflife)
    out = np.full((T, N, N), np.nan)
    s0 = 0.0
    s1 = np.zeros(N)
    s2 = np.zeros((N, N))
    eye = ridge * np.eye(N)
    for t in range(T):
        s0 = beta * s0 + 1.0
        s1 = beta * s1 + x[t]
        s2 = beta * s2 + np.outer(x[t], x[t])
        if t >= 1:
            m = s1 / s0
            c = s2 / s0 - np.outer(m, m)
            out[t] = 0.5 * (c + c.T) + eye
    return out


def rolling_correlation(x, y, window: int) -> np.ndarray:
    """Trailing-window Pearson correlation; NaN before the window fills or on zero variance."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if window < 2:
        raise ValueError("window must be at least 2")
    if x.shape != y.shape:
        raise ValueError("x and y must have equal length")
    out = np.full(x.shape, np.nan)
    if len(x) < window:
        return out
    xs = np.lib.stride_tricks.sliding_window_view(x, window)
    ys = np.lib.stride_tricks.sliding_window_view(y, window)
    xc = xs - xs.mean(axis=1, keepdims=True)
    yc = ys - ys.mean(axis=1, keepdims=True)
    sxy = (xc * yc).sum(axis=1)
    sxx = (xc * xc).sum(axis=1)
    syy = (yc * yc).sum(axis=1)
    # rounding leaves ~1e-32 residue on constant windows
    ok = (sxx > 1e-28) & (syy > 1e-28)
    denom = np.sqrt(np.where(ok, sxx * syy, 1.0))
    r = np.where(ok, sxy / denom, np.nan)
    out[window - 1:] = np.clip(r, -1.0, 1.0)
    return out

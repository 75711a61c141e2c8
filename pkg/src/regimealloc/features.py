"""Return features for the jump model and cross-asset macro features for the classifier."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import pandas as pd

from regimealloc.market_data import MacroPanel, ewm_mean, rolling_correlation

DD_FLOOR = 1e-8
DD_HALFLIVES = (5, 21)
RETURN_HALFLIVES = (5, 10, 21)
SORTINO_HALFLIVES = (5, 10, 21)
CORR_WINDOW = 252

DD_NAMES = tuple(f"dd_log_{h}" for h in DD_HALFLIVES)
RETURN_FEATURES = (
    DD_NAMES
    + tuple(f"ret_{h}" for h in RETURN_HALFLIVES)
    + tuple(f"sortino_{h}" for h in SORTINO_HALFLIVES)
)
MACRO_FEATURES = (
    "yield_2y_diff_ewm21",
    "slope_ewm10",
    "slope_diff_ewm21",
    "vix_logdiff_ewm63",
    "stock_bond_corr",
)


@dataclass(frozen=True)
class FeatureMatrix:
    """Dated feature frame; ``mean``/``std`` are set once standardized."""

    frame: pd.DataFrame
    mean: np.ndarray | None = None
    std: np.ndarray | None = None

    def __post_init__(self):
        if self.frame.columns.has_duplicates:
            raise ValueError("feature names must be unique")

    @property
    def names(self) -> list[str]:
        return list(self.frame.columns)

    @property
    def dates(self) -> pd.Index:
        return self.frame.index

    @property
    def values(self) -> np.ndarray:
        return self.frame.to_numpy()

    def destandardize(self) -> "FeatureMatrix":
        if self.mean is None:
            return self
        raw = self.frame * self.std + self.mean
        return FeatureMatrix(raw)

    def to_csv(self, path) -> None:
        self.frame.to_csv(path, index_label="date", float_format="%.17g")


def _as_series(x) -> pd.Series:
    if isinstance(x, pd.Series):
        return x.astype(float)
    return pd.Series(np.asarray(x, dtype=float))


def downside_deviation(r: np.ndarray, halflife: float) -> np.ndarray:
    neg = np.minimum(r, 0.0)
    return np.sqrt(ewm_mean(neg * neg, halflife))


def return_features(excess_returns) -> FeatureMatrix:
    """Eight EW-smoothed features of one asset's excess returns.

    log downside deviation (hl 5, 21), average return (hl 5, 10, 21) and
    Sortino ratio (hl 5, 10, 21). DD is floored at 1e-8 in the log and in
    the Sortino denominator.
    """
    s = _as_series(excess_returns)
    if len(s) == 0:
        raise ValueError("return_features: empty input")
    r = s.to_numpy()
    dd = {h: np.maximum(downside_deviation(r, h), DD_FLOOR) for h in set(DD_HALFLIVES) | set(SORTINO_HALFLIVES)}
    avg = {h: ewm_mean(r, h) for h in set(RETURN_HALFLIVES) | set(SORTINO_HALFLIVES)}
    cols = {}
    for h in DD_HALFLIVES:
        cols[f"dd_log_{h}"] = np.log(dd[h])
    for h in RETURN_HALFLIVES:
        cols[f"ret_{h}"] = avg[h]
    for h in SORTINO_HALFLIVES:
        cols[f"sortino_{h}"] = avg[h] / dd[h]
    return FeatureMatrix(pd.DataFrame(cols, index=s.index)[list(RETURN_FEATURES)])


def macro_features(macro: MacroPanel, corr_window: int = CORR_WINDOW) -> FeatureMatrix:
    """Five cross-asset features; warm-up rows stay NaN."""
    m = macro.series
    y2 = m["yield_2y"].to_numpy(dtype=float)
    slope = m["yield_slope_10y_2y"].to_numpy(dtype=float)
    vix = m["vix_level"].to_numpy(dtype=float)
    if (vix[np.isfinite(vix)] <= 0).any():
        raise ValueError("vix_level must be positive for log differences")
    cols = {
        "yield_2y_diff_ewm21": ewm_mean(np.diff(y2, prepend=np.nan), 21),
        "slope_ewm10": ewm_mean(slope, 10),
        "slope_diff_ewm21": ewm_mean(np.diff(slope, prepend=np.nan), 21),
        "vix_logdiff_ewm63": ewm_mean(np.diff(np.log(vix), prepend=np.nan), 63),
        "stock_bond_corr": rolling_correlation(
            m["stock_returns"].to_numpy(dtype=float), m["bond_returns"].to_numpy(dtype=float), corr_window
        ),
    }
    return FeatureMatrix(pd.DataFrame(cols, index=m.index)[list(MACRO_FEATURES)])


def standardize(features: FeatureMatrix, window) -> FeatureMatrix:
    """Z-score every row with the (population) mean/std of the rows selected by ``window``.

    ``window`` is a ``(start, end)`` pair of inclusive labels or a boolean mask.
    """
    frame = features.frame
    if isinstance(window, tuple):
        start, end = window
        mask = (frame.index >= start) & (frame.index <= end)
    else:
        mask = np.asarray(window, dtype=bool)
    win = frame.to_numpy()[mask]
    if len(win) == 0:
        raise ValueError("standardize: empty window")
    mean = win.mean(axis=0)
    std = win.std(axis=0)
    # constant windows can leave a rounding-level std instead of an exact zero
    zero = [n for n, sd, mu in zip(frame.columns, std, mean) if not sd > 1e-12 * max(1.0, abs(mu))]
    if zero:
        raise ValueError(f"standardize: zero in-window std for feature(s) {zero}")
    z = (frame - mean) / std
    return FeatureMatrix(z, mean=mean, std=std)


def select_jm_features(features: FeatureMatrix, exclude_dd: bool) -> FeatureMatrix:
    if not exclude_dd:
        return features
    missing = [n for n in DD_NAMES if n not in features.names]
    if missing:
        raise KeyError(f"columns not found: {missing}")
    keep = [i for i, n in enumerate(features.names) if n not in DD_NAMES]
    mean = None if features.mean is None else features.mean[keep]
    std = None if features.std is None else features.std[keep]
    return FeatureMatrix(features.frame.iloc[:, keep], mean=mean, std=std)

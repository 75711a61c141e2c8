"""Synthetic regime-switching universes with planted ground-truth states.

Each asset follows its own two-state Markov chain (0 = bull, 1 = bear). Daily
returns are Gaussian with state-dependent mean and volatility; shocks are
equicorrelated across assets. The macro stub is driven by the fraction of
assets in the bear state so the macro features carry real signal.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd

from regimealloc.errors import ConfigError
from regimealloc.market_data import MacroPanel, ReturnPanel, annual_to_daily, ewm_mean

BULL, BEAR = 0, 1


@dataclass
class RegimeProcessSpec:
    n_assets: int = 4
    p_stay_bull: float | list[float] = 0.98
    p_stay_bear: float | list[float] = 0.97
    bull_mean: float | list[float] = 0.0004
    bull_vol: float | list[float] = 0.008
    bear_mean: float | list[float] = -0.0008
    bear_vol: float | list[float] = 0.020
    correlation: float = 0.3
    risk_free_pct: float = 2.0  # annualized percent
    T: int = 5220
    seed: int = 0
    start_date: str = "2000-01-03"
    start_state: int | None = None  # None draws from the stationary distribution
    asset_names: list[str] | None = None
    macro_noise: float = 0.05

    def per_asset(self, name: str) -> np.ndarray:
        v = np.asarray(getattr(self, name), dtype=float)
        if v.ndim == 0:
            return np.full(self.n_assets, float(v))
        if v.shape != (self.n_assets,):
            raise ConfigError(f"{name} needs one value per asset")
        return v

    @property
    def names(self) -> list[str]:
        if self.asset_names is not None:
            return list(self.asset_names)
        return [f"A{i}" for i in range(self.n_assets)]

    def correlation_matrix(self) -> np.ndarray:
        n = self.n_assets
        return np.full((n, n), self.correlation) + (1.0 - self.correlation) * np.eye(n)

    def validate(self) -> None:
        if self.n_assets < 1 or self.T < 2:
            raise ConfigError("need at least one asset and two days")
        for name in ("p_stay_bull", "p_stay_bear"):
            p = self.per_asset(name)
            if ((p <= 0) | (p > 1)).any():
                raise ConfigError(f"{name} must lie in (0, 1]")
        for name in ("bull_vol", "bear_vol"):
            if (self.per_asset(name) <= 0).any():
                raise ConfigError(f"{name} must be positive")
        if len(self.names) != self.n_assets:
            raise ConfigError("asset_names length differs from n_assets")
        try:
            np.linalg.cholesky(self.correlation_matrix())
        except np.linalg.LinAlgError as exc:
            raise ConfigError("correlation matrix is not positive definite") from exc
        if self.start_state not in (None, BULL, BEAR):
            raise ConfigError("start_state must be 0, 1 or None")

    def to_dict(self) -> dict:
        return asdict(self)


def stationary_bull_share(p_stay_bull: float, p_stay_bear: float) -> float:
    leave_bull, leave_bear = 1.0 - p_stay_bull, 1.0 - p_stay_bear
    if leave_bull + leave_bear == 0:
        return float("nan")
    return leave_bear / (leave_bull + leave_bear)


def simulate_chain(T: int, p_stay_bull: float, p_stay_bear: float, rng: np.random.Generator,
                   start_state: int | None = None) -> np.ndarray:
    if start_state is None:
        pi = stationary_bull_share(p_stay_bull, p_stay_bear)
        start_state = BULL if rng.random() < pi else BEAR
    u = rng.random(T)
    states = np.empty(T, dtype=np.int64)
    s = start_state
    stay = (p_stay_bull, p_stay_bear)
    for t in range(T):
        if t > 0 and u[t] >= stay[s]:
            s = 1 - s
        states[t] = s
    return states


@dataclass
class SyntheticUniverse:
    panel: ReturnPanel
    states: pd.DataFrame  # 0 = bull, 1 = bear
    macro: MacroPanel
    spec: RegimeProcessSpec = field(repr=False)

    def write_csv(self, out_dir) -> dict[str, Path]:
        """Write the files the loaders read, plus the planted states."""
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        fmt = "%.17g"
        paths = {k: out / f"{k}.csv" for k in ("returns", "riskfree", "macro", "truth_states")}
        self.panel.returns.to_csv(paths["returns"], float_format=fmt, date_format="%Y-%m-%d")
        rf = pd.DataFrame({"risk_free": np.full(len(self.panel.dates), self.spec.risk_free_pct)},
                          index=self.panel.dates)
        rf.index.name = "date"
        rf.to_csv(paths["riskfree"], float_format=fmt, date_format="%Y-%m-%d")
        self.macro.series.to_csv(paths["macro"], float_format=fmt, date_format="%Y-%m-%d")
        self.states.to_csv(paths["truth_states"], date_format="%Y-%m-%d")
        return paths

    def summary(self) -> pd.DataFrame:
        """Planted bull share and mean run length per asset."""
        rows = {}
        for a in self.states.columns:
            s = self.states[a].to_numpy()
            runs = 1 + np.count_nonzero(s[1:] != s[:-1])
            rows[a] = {"bull_share": float(np.mean(s == BULL)), "mean_run_length": len(s) / runs}
        return pd.DataFrame(rows).T


def generate(spec: RegimeProcessSpec | None = None) -> SyntheticUniverse:
    spec = spec or RegimeProcessSpec()
    spec.validate()
    n, T = spec.n_assets, spec.T
    seeds = np.random.SeedSequence(spec.seed).spawn(n + 2)
    p_bull, p_bear = spec.per_asset("p_stay_bull"), spec.per_asset("p_stay_bear")
    states = np.column_stack([
        simulate_chain(T, p_bull[j], p_bear[j], np.random.default_rng(seeds[j]), spec.start_state)
        for j in range(n)
    ])
    shock_rng = np.random.default_rng(seeds[n])
    z = shock_rng.standard_normal((T, n)) @ np.linalg.cholesky(spec.correlation_matrix()).T
    mean = np.where(states == BULL, spec.per_asset("bull_mean"), spec.per_asset("bear_mean"))
    vol = np.where(states == BULL, spec.per_asset("bull_vol"), spec.per_asset("bear_vol"))
    rf_daily = float(annual_to_daily(spec.risk_free_pct))
    # means are excess returns; floor keeps simple returns above -1 in extreme draws
    returns = np.maximum(rf_daily + mean + vol * z, -0.95)

    dates = pd.bdate_range(spec.start_date, periods=T, name="date")
    names = spec.names
    panel = ReturnPanel(pd.DataFrame(returns, index=dates, columns=names),
                        pd.Series(rf_daily, index=dates, name="risk_free"))
    macro = _macro_stub(states, returns, dates, spec.macro_noise, np.random.default_rng(seeds[n + 1]))
    truth = pd.DataFrame(states, index=dates, columns=names)
    return SyntheticUniverse(panel, truth, macro, spec)


def _macro_stub(states, returns, dates, noise, rng) -> MacroPanel:
    T = len(dates)
    stress = ewm_mean((states == BEAR).mean(axis=1), 10.0)
    e = rng.standard_normal((T, 4))
    y2 = 3.0 - 1.5 * stress + noise * e[:, 0]
    slope = 1.0 + 1.0 * stress + noise * e[:, 1]
    vix = 15.0 * np.exp(0.8 * stress + noise * e[:, 2])
    stock = returns[:, 0]
    # stock/bond co-movement flips sign under stress
    bond = 0.0001 + 0.004 * e[:, 3] + (0.2 - 0.6 * stress) * stock
    frame = pd.DataFrame({
        "yield_2y": y2,
        "yield_slope_10y_2y": slope,
        "vix_level": vix,
        "stock_returns": stock,
        "bond_returns": bond,
    }, index=dates)
    return MacroPanel(frame)

"""Strategy definitions and the mapping from regime forecasts to target weights."""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from regimealloc.errors import ConfigError, NumericalError
from regimealloc.mvo import KKT_TOL, MvoProblem, solve

log = logging.getLogger(__name__)

KINDS = ("fix_mix", "minvar", "minvar_regime", "mv", "mv_regime", "ew", "ew_regime", "zero_one")
REGIME_KINDS = ("minvar_regime", "mv_regime", "ew_regime", "zero_one")
MVO_KINDS = ("minvar", "minvar_regime", "mv", "mv_regime")

STANDARD_UNIVERSE = (
    "LargeCap", "MidCap", "SmallCap", "EAFE", "EM", "REIT",
    "HighYield", "Commodity", "Gold", "Treasury", "Corporate", "AggBond",
)
FIX_MIX_60_40 = {
    "LargeCap": 0.10, "MidCap": 0.05, "SmallCap": 0.05, "EAFE": 0.05, "EM": 0.05, "REIT": 0.10,
    "HighYield": 0.10, "Commodity": 0.05, "Gold": 0.05,
    "Treasury": 0.10, "Corporate": 0.10, "AggBond": 0.20,
}

# (gamma_risk, gamma_trade) per kind
_GAMMAS = {
    "minvar": (10.0, 0.0),
    "minvar_regime": (10.0, 1.0),
    "mv": (5.0, 0.0),
    "mv_regime": (10.0, 1.0),
}


@dataclass
class StrategySpec:
    name: str
    kind: str
    gamma_risk: float | None = None
    gamma_trade: float | None = None
    w_ub: float = 0.4
    leverage_cap: float = 1.0
    min_bullish_count: int = 4
    covariance_halflife: float = 252.0
    mu_halflife: float = 5 * 252.0
    bearish_return_cap: float = -0.0010
    bullish_minvar_mu: float = 0.0010
    fix_mix_weights: list[float] | None = None
    asset: str | None = None
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError(f"unknown strategy kind {self.kind!r}")
        gr, gt = _GAMMAS.get(self.kind, (10.0, 0.0))
        if self.gamma_risk is None:
            self.gamma_risk = gr
        if self.gamma_trade is None:
            self.gamma_trade = gt

    @property
    def uses_regimes(self) -> bool:
        return self.kind in REGIME_KINDS

    def to_dict(self) -> dict:
        return asdict(self)


def default_strategies(fix_mix_weights=None) -> list[StrategySpec]:
    """The seven allocation rules of the portfolio comparison with their default settings."""
    return [
        StrategySpec("60/40", "fix_mix", fix_mix_weights=fix_mix_weights),
        StrategySpec("MinVar", "minvar"),
        StrategySpec("MinVar(regime)", "minvar_regime"),
        StrategySpec("MV", "mv"),
        StrategySpec("MV(regime)", "mv_regime"),
        StrategySpec("EW", "ew"),
        StrategySpec("EW(regime)", "ew_regime"),
    ]


def sensitivity_strategies(gamma_trade=(0.0, 1.0), gamma_risk=(5.0, 10.0, 20.0)) -> list[StrategySpec]:
    """Trade-aversion sweep on MinVar(regime) and risk-aversion sweep on MV(regime)."""
    out = [StrategySpec(f"MinVar(regime)[gamma_trade={g:g}]", "minvar_regime", gamma_trade=g) for g in gamma_trade]
    out += [StrategySpec(f"MV(regime)[gamma_risk={g:g}]", "mv_regime", gamma_risk=g) for g in gamma_risk]
    return out


def fix_mix_default(assets=None) -> np.ndarray:
    """60/40 benchmark weights, in the standard universe order or matched to ``assets`` by name."""
    if assets is None:
        return np.array([FIX_MIX_60_40[a] for a in STANDARD_UNIVERSE])
    assets = list(assets)
    if len(assets) != len(STANDARD_UNIVERSE):
        raise ConfigError(f"60/40 defaults need the 12-asset universe, got {len(assets)} assets; "
                          "set fix_mix_weights explicitly")
    if set(assets) == set(STANDARD_UNIVERSE):
        return np.array([FIX_MIX_60_40[a] for a in assets])
    return np.array([FIX_MIX_60_40[a] for a in STANDARD_UNIVERSE])


def build_mu(spec: StrategySpec, forecasts=None, bull_mean=None, bear_mean=None, ewma_mu=None) -> np.ndarray:
    """Expected daily excess returns for the MVO kinds.

    ``forecasts`` is 1 for bullish, 0 for bearish. ``bull_mean``/``bear_mean``
    are the regime-conditional mean excess returns from each asset's latest fit.
    """
    k = spec.kind
    if k == "minvar":
        n = len(forecasts) if forecasts is not None else len(ewma_mu)
        return np.full(n, spec.bullish_minvar_mu)
    if k == "mv":
        if ewma_mu is None:
            raise ValueError("mv needs historical EWMA means")
        return np.asarray(ewma_mu, dtype=float)
    f = np.asarray(forecasts)
    if k == "minvar_regime":
        return np.where(f == 1, spec.bullish_minvar_mu, 0.0)
    if k == "mv_regime":
        if bull_mean is None or bear_mean is None:
            raise ValueError("mv_regime needs regime-conditional return tables")
        bull = np.asarray(bull_mean, dtype=float)
        bear = np.asarray(bear_mean, dtype=float)
        # an empty regime has no mean: bullish -> 0, bearish -> the cap
        bull = np.where(np.isfinite(bull), bull, 0.0)
        bear = np.where(np.isfinite(bear), np.minimum(bear, spec.bearish_return_cap), spec.bearish_return_cap)
        return np.where(f == 1, bull, bear)
    raise ValueError(f"{k} does not use return forecasts")


def _check_bounds(w: np.ndarray, ub: float, cap: float) -> None:
    if (w < -1e-8).any() or (w > ub + 1e-8).any() or w.sum() > cap + 1e-8:
        raise NumericalError(f"weights violate bounds: {w}")


def target_weights(spec: StrategySpec, mu=None, sigma=None, w_pre=None, forecasts=None,
                   assets=None, cost_a: float = 0.0005) -> np.ndarray:
    """Post-trade risky-asset weights for one rebalance date; the rest sits in cash."""
    n = len(w_pre) if w_pre is not None else len(forecasts)
    k = spec.kind
    if spec.uses_regimes:
        bull = np.asarray(forecasts) == 1
        if k != "zero_one" and bull.sum() < spec.min_bullish_count:
            return np.zeros(n)
    if k == "ew":
        w = np.full(n, 1.0 / n)
        _check_bounds(w, 1.0, 1.0)
        return w
    if k == "ew_regime":
        w = np.where(bull, 1.0 / bull.sum(), 0.0)
        _check_bounds(w, 1.0, 1.0)
        return w
    if k == "fix_mix":
        w = np.asarray(spec.fix_mix_weights if spec.fix_mix_weights is not None else fix_mix_default(assets),
                       dtype=float)
        if len(w) != n:
            raise ConfigError(f"{spec.name}: {len(w)} fix-mix weights for {n} assets")
        _check_bounds(w, 1.0, 1.0)
        return w.copy()
    if k == "zero_one":
        if assets is None or spec.asset not in list(assets):
            raise ConfigError(f"{spec.name}: zero_one needs an 'asset' from the universe")
        w = np.zeros(n)
        j = list(assets).index(spec.asset)
        w[j] = 1.0 if bull[j] else 0.0
        return w
    problem = MvoProblem(mu=mu, sigma=sigma, gamma_risk=spec.gamma_risk, gamma_trade=spec.gamma_trade,
                         cost_a=cost_a, w_pre=w_pre, w_ub=spec.w_ub, leverage_cap=spec.leverage_cap)
    sol = solve(problem)
    if not sol.converged:
        raise NumericalError(f"{spec.name}: QP hit the iteration cap")
    if sol.kkt_residual > KKT_TOL:
        log.warning("%s: KKT residual %.2e above tolerance", spec.name, sol.kkt_residual)
    _check_bounds(sol.weights, spec.w_ub, spec.leverage_cap)
    return sol.weights


def with_overrides(spec: StrategySpec, **kw) -> StrategySpec:
    return replace(spec, **kw)

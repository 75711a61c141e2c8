"""YAML run configuration with every default pre-populated."""

from __future__ import annotations

import copy
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import yaml

from regimealloc.allocation import StrategySpec, default_strategies
from regimealloc.errors import ConfigError
from regimealloc.gbdt import GBDTParams
from regimealloc.pipeline import RegimeConfig, default_lambda_grid
from regimealloc.synthgen import RegimeProcessSpec


@dataclass
class DataConfig:
    returns: str | None = None
    risk_free: str | None = None  # separate file; otherwise a column of ``returns``
    risk_free_column: str = "risk_free"
    macro: str | None = None
    kind: str = "returns"  # or "levels"


@dataclass
class SensitivityConfig:
    enabled: bool = False
    gamma_trade: list[float] = field(default_factory=lambda: [0.0, 1.0])
    gamma_risk: list[float] = field(default_factory=lambda: [5.0, 10.0, 20.0])


@dataclass
class RunConfig:
    data: DataConfig = field(default_factory=DataConfig)
    universe: list[str] | None = None
    test_start: str | None = None  # default: earliest date with full history
    test_end: str | None = None
    regime: RegimeConfig = field(default_factory=RegimeConfig)
    strategies: list[StrategySpec] = field(default_factory=default_strategies)
    sensitivity: SensitivityConfig = field(default_factory=SensitivityConfig)
    simulate: RegimeProcessSpec = field(default_factory=RegimeProcessSpec)
    cost: float = 0.0005
    seed: int = 0
    output_dir: str = "runs/default"
    cache_dir: str | None = None

    def __post_init__(self):
        # one seed and one cost figure drive every stage
        self.regime.seed = self.seed
        self.regime.cost = self.cost
        self.simulate.seed = self.seed

    def to_dict(self) -> dict:
        d = asdict(self)
        for k in ("seed", "cost"):
            d["regime"].pop(k)
        d["simulate"].pop("seed")
        for s in d["strategies"]:
            s.pop("extra")
        return d

    def dump(self, path) -> None:
        Path(path).write_text(yaml.safe_dump(self.to_dict(), sort_keys=False))


def default_dict() -> dict:
    return RunConfig().to_dict()


def _check_keys(d: dict, allowed, where: str) -> None:
    unknown = sorted(set(d) - set(allowed))
    if unknown:
        raise ConfigError(f"unknown key(s) in {where}: {unknown}")


def _build(cls, d, where: str):
    if d is None:
        return cls()
    if not isinstance(d, dict):
        raise ConfigError(f"{where} must be a mapping")
    _check_keys(d, [f.name for f in fields(cls)], where)
    try:
        return cls(**d)
    except TypeError as exc:
        raise ConfigError(f"{where}: {exc}") from exc


def from_dict(raw: dict | None) -> RunConfig:
    raw = copy.deepcopy(raw or {})
    if not isinstance(raw, dict):
        raise ConfigError("config must be a mapping")
    _check_keys(raw, [f.name for f in fields(RunConfig)], "config")
    regime = dict(raw.pop("regime", None) or {})
    for k in ("seed", "cost"):
        if k in regime:
            raise ConfigError(f"set '{k}' at the top level, not under regime")
    gb = _build(GBDTParams, regime.pop("gbdt", None), "regime.gbdt")
    if regime.get("lambda_grid") is None:
        regime["lambda_grid"] = default_lambda_grid()
    regime_cfg = _build(RegimeConfig, regime, "regime")
    regime_cfg.gbdt = gb
    if any(l < 0 for l in regime_cfg.lambda_grid) or not regime_cfg.lambda_grid:
        raise ConfigError("lambda_grid must be a non-empty list of non-negative penalties")
    try:
        regime_cfg.validation_blocks
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    strategies = raw.pop("strategies", None)
    if strategies is None:
        specs = default_strategies()
    else:
        if not isinstance(strategies, list):
            raise ConfigError("strategies must be a list")
        specs = [_build(StrategySpec, s, f"strategies[{i}]") for i, s in enumerate(strategies)]
        names = [s.name for s in specs]
        if len(set(names)) != len(names):
            raise ConfigError("strategy names must be unique")
    simulate = dict(raw.pop("simulate", None) or {})
    if "seed" in simulate:
        raise ConfigError("set 'seed' at the top level, not under simulate")
    cfg = RunConfig(
        data=_build(DataConfig, raw.pop("data", None), "data"),
        regime=regime_cfg,
        strategies=specs,
        sensitivity=_build(SensitivityConfig, raw.pop("sensitivity", None), "sensitivity"),
        simulate=_build(RegimeProcessSpec, simulate, "simulate"),
        **raw,
    )
    if cfg.cost < 0:
        raise ConfigError("cost must be non-negative")
    return cfg


def load(path) -> RunConfig:
    try:
        raw = yaml.safe_load(Path(path).read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except yaml.YAMLError as exc:
        raise ConfigError(f"malformed config {path}: {exc}") from exc
    return from_dict(raw)

import numpy as np
import pandas as pd
import pytest
from hypothesis import HealthCheck, settings

from regimealloc import gbdt, pipeline, synthgen

settings.register_profile("default", deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


def compact_regime_config(**kw) -> pipeline.RegimeConfig:
    """Short lookbacks and a small grid so walk-forward runs take seconds."""
    base = dict(
        train_years=3,
        validation_years=1,
        lambda_grid=[0.0, 3.0, 30.0],
        halflife_candidates=[0, 4],
        jm_restarts=3,
        gbdt=gbdt.GBDTParams(rounds=15, max_depth=3),
        corr_window=63,
    )
    base.update(kw)
    return pipeline.RegimeConfig(**base)


@pytest.fixture(scope="session")
def small_universe():
    # 6 years of 4 assets with the acceptance-suite regime parameters
    return synthgen.generate(synthgen.RegimeProcessSpec(T=6 * 261, seed=7))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def make_panel(returns, rf=0.0, start="2020-01-01"):
    from regimealloc.market_data import ReturnPanel

    r = np.atleast_2d(np.asarray(returns, dtype=float))
    if r.shape[0] == 1 and np.ndim(returns) == 1:
        r = r.T
    dates = pd.bdate_range(start, periods=len(r))
    cols = [f"A{i}" for i in range(r.shape[1])]
    return ReturnPanel(pd.DataFrame(r, index=dates, columns=cols),
                       pd.Series(np.broadcast_to(rf, len(r)).astype(float), index=dates))


# acceptance results, printed once at the end of the run
ACCEPTANCE: dict[int, tuple[bool, str, str]] = {}


def record_acceptance(number: int, title: str, ok: bool, detail: str) -> None:
    ACCEPTANCE[number] = (bool(ok), title, detail)
    print(f"[acceptance #{number}] {'PASS' if ok else 'FAIL'}: {title} ({detail})")


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    for n in sorted(ACCEPTANCE):
        ok, title, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"#{n:<2} {'PASS' if ok else 'FAIL'}  {title}: {detail}")

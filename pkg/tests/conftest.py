from __future__ import annotations

import datetime as dt
import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from crisisdyn.market_data import SECTORS, PricePanel  # noqa: E402
from crisisdyn.synthetic_market import FactorModelSpec, business_days, generate  # noqa: E402


def panel_from_returns(returns, sectors, start=dt.date(2020, 1, 1), tickers=None) -> PricePanel:
    """Build a panel whose log returns are exactly ``returns`` (up to rounding)."""
    returns = np.asarray(returns, dtype=float)
    T, n = returns.shape
    tickers = tickers or [f"T{i:03d}" for i in range(n)]
    prices = 100.0 * np.exp(np.vstack([np.zeros(n), np.cumsum(returns, axis=0)]))
    dates = business_days(start, T + 1)
    return PricePanel(tuple(dates), tuple(tickers), prices, dict(zip(tickers, sectors)))


@pytest.fixture(scope="session")
def factor_panel() -> PricePanel:
    spec = FactorModelSpec(n_sectors=11, stocks_per_sector=10, T=400, market_beta=0.4,
                           sector_beta=0.4, idio_sigma=1.0, seed=11)
    return generate(spec)


@pytest.fixture(scope="session")
def small_panel() -> PricePanel:
    spec = FactorModelSpec(n_sectors=4, stocks_per_sector=4, T=120, market_beta=0.01,
                           sector_beta=0.005, idio_sigma=0.02, seed=5)
    return generate(spec)


@pytest.fixture
def sectors():
    return SECTORS


def pytest_terminal_summary(terminalreporter):
    rows = []
    for key in ("passed", "failed", "skipped", "error"):
        for rep in terminalreporter.stats.get(key, []):
            nodeid = getattr(rep, "nodeid", "")
            if "test_acceptance.py" not in nodeid or getattr(rep, "when", "call") not in ("call", "setup"):
                continue
            if key == "passed" and rep.when != "call":
                continue
            rows.append((nodeid.split("::")[-1], {"passed": "PASS", "failed": "FAIL", "skipped": "SKIP", "error": "ERROR"}[key]))
    if not rows:
        return
    terminalreporter.section("acceptance criteria")
    for name, status in sorted(rows, key=lambda r: int(r[0].split("_")[1]) if r[0].split("_")[1].isdigit() else 99):
        terminalreporter.write_line(f"{status:5s} {name}")

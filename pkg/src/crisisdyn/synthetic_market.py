"""Factor-model price panels with known correlation structure."""

from __future__ import annotations

import datetime as dt
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError
from .market_data import SECTORS, PricePanel

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

START_PRICE = 100.0


@dataclass(frozen=True)
class FactorModelSpec:
    """Daily log return of stock ``i`` in sector ``s``::

        r[i, t] = drift[s] + market_beta * F[t] + sector_beta * G[s, t] + idio_sigma * e[i, t]

    ``F``, ``G`` and ``e`` are independent standard normals; with
    ``student_t_df`` set, ``e`` is Student-t rescaled to unit variance.
    """

    n_sectors: int = 11
    stocks_per_sector: int = 10
    T: int = 250
    market_beta: float = 0.0
    sector_beta: float = 0.0
    idio_sigma: float = 1.0
    drift: tuple[float, ...] = field(default=())
    seed: int = 0
    start_date: dt.date = dt.date(2000, 1, 3)
    student_t_df: float | None = None

    def __post_init__(self):
        if not 1 <= self.n_sectors <= len(SECTORS):
            raise ConfigError(f"n_sectors must be in 1..{len(SECTORS)}")
        if self.stocks_per_sector < 1:
            raise ConfigError("stocks_per_sector must be positive")
        if self.T < 1:
            raise ConfigError("T must be positive")
        if self.market_beta < 0 or self.sector_beta < 0 or not self.idio_sigma > 0:
            raise ConfigError("betas must be >= 0 and idio_sigma > 0")
        drift = tuple(float(x) for x in self.drift) or (0.0,) * self.n_sectors
        if len(drift) != self.n_sectors:
            raise ConfigError(f"drift needs {self.n_sectors} entries, got {len(drift)}")
        object.__setattr__(self, "drift", drift)
        if self.student_t_df is not None and not self.student_t_df > 2:
            raise ConfigError("student_t_df must exceed 2 for finite variance")

    @property
    def n_stocks(self) -> int:
        return self.n_sectors * self.stocks_per_sector

    def equicorrelation(self) -> float:
        """Population correlation of two stocks in different sectors."""
        bm2 = self.market_beta**2
        return bm2 / (bm2 + self.sector_beta**2 + self.idio_sigma**2)

    def within_sector_correlation(self) -> float:
        v = self.market_beta**2 + self.sector_beta**2
        return v / (v + self.idio_sigma**2)


def business_days(start: dt.date, n: int) -> list[dt.date]:
    out, d = [], start
    while len(out) < n:
        if d.weekday() < 5:
            out.append(d)
        d += dt.timedelta(days=1)
    return out


def generate_returns(spec: FactorModelSpec) -> np.ndarray:
    rng = np.random.default_rng(spec.seed)
    T, n = spec.T, spec.n_stocks
    sector = np.repeat(np.arange(spec.n_sectors), spec.stocks_per_sector)
    market = rng.standard_normal(T)
    sector_f = rng.standard_normal((T, spec.n_sectors))
    if spec.student_t_df is None:
        noise = rng.standard_normal((T, n))
    else:
        df = spec.student_t_df
        noise = rng.standard_t(df, (T, n)) / np.sqrt(df / (df - 2))
    drift = np.asarray(spec.drift)[sector]
    return drift + spec.market_beta * market[:, None] + spec.sector_beta * sector_f[:, sector] + spec.idio_sigma * noise


def generate(spec: FactorModelSpec) -> PricePanel:
    """Panel of ``T + 1`` daily closes (starting at 100) whose log returns follow ``spec``."""
    r = generate_returns(spec)
    logp = np.vstack([np.zeros(spec.n_stocks), np.cumsum(r, axis=0)])
    prices = START_PRICE * np.exp(logp)
    tickers = [
        f"{SECTORS[s][:3].upper()}{s:02d}_{j:03d}" for s in range(spec.n_sectors) for j in range(spec.stocks_per_sector)
    ]
    sector_of = {t: SECTORS[i // spec.stocks_per_sector] for i, t in enumerate(tickers)}
    return PricePanel(tuple(business_days(spec.start_date, spec.T + 1)), tuple(tickers), prices, sector_of)


def load_spec(path: str | Path) -> FactorModelSpec:
    """Read a ``FactorModelSpec`` from a flat TOML table (keys are field names)."""
    path = Path(path)
    try:
        with open(path, "rb") as fh:
            doc = tomllib.load(fh)
    except OSError as exc:
        raise ConfigError(f"{path}: cannot open ({exc.strerror})") from None
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from None
    doc = doc.get("synth", doc)
    known = set(FactorModelSpec.__dataclass_fields__)
    unknown = set(doc) - known
    if unknown:
        raise ConfigError(f"{path}: unknown keys {sorted(unknown)}")
    if "drift" in doc:
        doc["drift"] = tuple(doc["drift"])
    if isinstance(doc.get("start_date"), str):
        doc["start_date"] = dt.date.fromisoformat(doc["start_date"])
    try:
        return FactorModelSpec(**doc)
    except TypeError as exc:
        raise ConfigError(f"{path}: {exc}") from None

"""Price-panel ingestion, sector universe and crisis windows."""

from __future__ import annotations

import csv
import datetime as dt
import logging
import math
import sys
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import ConfigError, DataError, IngestionError

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

log = logging.getLogger(__name__)

SECTORS: tuple[str, ...] = (
    "Energy",
    "Communications",
    "Real Estate",
    "Utilities",
    "Materials",
    "Financials",
    "Consumer staples",
    "Consumer discretionary",
    "Industrials",
    "Information technology",
    "Healthcare",
)

# GICS spellings seen in vendor files
_SECTOR_ALIASES = {
    "communication services": "Communications",
    "telecommunication services": "Communications",
    "health care": "Healthcare",
    "it": "Information technology",
}
_SECTOR_LOOKUP = {s.lower(): s for s in SECTORS} | _SECTOR_ALIASES


def canonical_sector(label: str) -> str:
    """Map a sector label onto the fixed universe; raise ``KeyError`` if unknown."""
    return _SECTOR_LOOKUP[label.strip().lower()]


def sector_index(label: str) -> int:
    return SECTORS.index(label)


@dataclass(frozen=True)
class CrisisWindow:
    name: str
    start: dt.date
    end: dt.date

    def __post_init__(self):
        if not self.start < self.end:
            raise ConfigError(f"crisis {self.name!r}: start {self.start} is not before end {self.end}")


@dataclass(frozen=True, eq=False)
class PricePanel:
    """Aligned daily closes, ``prices[t, i]`` for date ``t`` and ticker ``i``.

    Arrays are made read-only on construction so a panel can be shared
    freely between threads.
    """

    dates: tuple[dt.date, ...]
    tickers: tuple[str, ...]
    prices: np.ndarray
    sector_of: Mapping[str, str]
    dropped: tuple[str, ...] = field(default=())

    def __post_init__(self):
        prices = np.array(self.prices, dtype=float)
        if prices.ndim != 2 or prices.shape != (len(self.dates), len(self.tickers)):
            raise DataError(
                f"price matrix shape {prices.shape} does not match "
                f"{len(self.dates)} dates x {len(self.tickers)} tickers"
            )
        if not np.all(np.isfinite(prices)) or np.any(prices <= 0):
            raise DataError("prices must be finite and strictly positive")
        if any(b <= a for a, b in zip(self.dates, self.dates[1:])):
            raise DataError("dates must be strictly increasing")
        if len(set(self.tickers)) != len(self.tickers):
            raise DataError("duplicate tickers in panel")
        for t in self.tickers:
            if self.sector_of.get(t) not in SECTORS:
                raise DataError(f"ticker {t!r} has no sector in the 11-sector universe")
        prices.setflags(write=False)
        object.__setattr__(self, "prices", prices)
        object.__setattr__(self, "dates", tuple(self.dates))
        object.__setattr__(self, "tickers", tuple(self.tickers))
        object.__setattr__(self, "sector_of", {t: self.sector_of[t] for t in self.tickers})

    @property
    def shape(self) -> tuple[int, int]:
        return self.prices.shape

    def sectors(self) -> np.ndarray:
        """Sector index (into ``SECTORS``) of every column."""
        return np.array([SECTORS.index(self.sector_of[t]) for t in self.tickers], dtype=int)

    def sector_counts(self) -> np.ndarray:
        return np.bincount(self.sectors(), minlength=len(SECTORS))

    def columns(self, idx: Sequence[int]) -> "PricePanel":
        tickers = [self.tickers[i] for i in idx]
        return PricePanel(self.dates, tickers, self.prices[:, list(idx)], self.sector_of)


def _parse_date(text: str, where: str) -> dt.date:
    try:
        return dt.date.fromisoformat(text.strip())
    except ValueError:
        raise IngestionError(f"{where}: bad date {text!r} (expected YYYY-MM-DD)") from None


def _read_rows(path: Path, header: tuple[str, ...]) -> Iterable[tuple[int, list[str]]]:
    try:
        fh = open(path, newline="", encoding="utf-8")
    except OSError as exc:
        raise IngestionError(f"{path}: cannot open ({exc.strerror})") from None
    with fh:
        reader = csv.reader(fh)
        first = next(reader, None)
        if first is None or tuple(c.strip().lower() for c in first) != header:
            raise IngestionError(f"{path}: header must be {','.join(header)!r}, got {first!r}")
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise IngestionError(f"{path}:{lineno}: expected {len(header)} fields, got {len(row)}")
            yield lineno, row


def load_sectors(path: str | Path) -> dict[str, str]:
    path = Path(path)
    out: dict[str, str] = {}
    for lineno, (ticker, label) in _read_rows(path, ("ticker", "sector")):
        ticker = ticker.strip()
        if not ticker:
            raise IngestionError(f"{path}:{lineno}: empty ticker")
        try:
            sector = canonical_sector(label)
        except KeyError:
            raise IngestionError(f"{path}:{lineno}: unknown sector label {label!r}") from None
        if ticker in out and out[ticker] != sector:
            raise IngestionError(f"{path}:{lineno}: conflicting sector for {ticker!r}")
        out[ticker] = sector
    return out


def load_panel(price_csv_path: str | Path, sector_csv_path: str | Path) -> PricePanel:
    """Read ``date,ticker,close`` and ``ticker,sector`` files into an aligned panel.

    The panel covers the intersection of all tickers' date ranges; any ticker
    missing a date inside that range is dropped (listed in ``panel.dropped``).
    """
    price_csv_path = Path(price_csv_path)
    sector_of = load_sectors(sector_csv_path)

    series: dict[str, dict[dt.date, float]] = {}
    for lineno, (d, ticker, close) in _read_rows(price_csv_path, ("date", "ticker", "close")):
        where = f"{price_csv_path}:{lineno}"
        day = _parse_date(d, where)
        ticker = ticker.strip()
        if not ticker:
            raise IngestionError(f"{where}: empty ticker")
        try:
            value = float(close)
        except ValueError:
            raise IngestionError(f"{where}: bad price {close!r}") from None
        if not math.isfinite(value) or value <= 0:
            raise IngestionError(f"{where}: price must be finite and positive, got {close!r}")
        if ticker not in sector_of:
            raise IngestionError(f"{where}: ticker {ticker!r} missing from {sector_csv_path}")
        by_date = series.setdefault(ticker, {})
        if day in by_date:
            raise IngestionError(f"{where}: duplicate row for {ticker!r} on {day}")
        by_date[day] = value

    if not series:
        raise IngestionError(f"{price_csv_path}: no price rows")

    lo = max(min(s) for s in series.values())
    hi = min(max(s) for s in series.values())
    if lo > hi:
        raise IngestionError(f"{price_csv_path}: tickers' date ranges have empty intersection")
    dates = sorted({d for s in series.values() for d in s if lo <= d <= hi})

    keep, dropped = [], []
    for ticker in sorted(series):
        s = series[ticker]
        (keep if all(d in s for d in dates) else dropped).append(ticker)
    if dropped:
        log.warning("dropped %d ticker(s) with gaps: %s", len(dropped), ", ".join(dropped))
    if not keep:
        raise IngestionError(f"{price_csv_path}: no ticker has complete coverage of {lo}..{hi}")

    prices = np.array([[series[t][d] for t in keep] for d in dates], dtype=float)
    return PricePanel(tuple(dates), tuple(keep), prices, sector_of, dropped=tuple(dropped))


def slice_window(panel: PricePanel, window: CrisisWindow) -> PricePanel:
    """Restrict ``panel`` to dates in ``[window.start, window.end]``."""
    rows = [i for i, d in enumerate(panel.dates) if window.start <= d <= window.end]
    if not rows:
        raise DataError(
            f"crisis {window.name!r} ({window.start}..{window.end}) does not overlap "
            f"panel dates {panel.dates[0]}..{panel.dates[-1]}"
        )
    lo, hi = rows[0], rows[-1] + 1
    return PricePanel(panel.dates[lo:hi], panel.tickers, panel.prices[lo:hi], panel.sector_of)


def _as_date(value, where: str) -> dt.date:
    if isinstance(value, dt.datetime):
        return value.date()
    if isinstance(value, dt.date):
        return value
    if isinstance(value, str):
        try:
            return dt.date.fromisoformat(value)
        except ValueError:
            pass
    raise ConfigError(f"{where}: bad date {value!r}")


def parse_crises(doc: Mapping, source: str = "<config>") -> list[CrisisWindow]:
    entries = doc.get("crisis")
    if not isinstance(entries, list) or not entries:
        raise ConfigError(f"{source}: expected one or more [[crisis]] tables")
    out = []
    for k, entry in enumerate(entries):
        where = f"{source}: crisis #{k + 1}"
        try:
            name = str(entry["name"])
            out.append(CrisisWindow(name, _as_date(entry["start"], where), _as_date(entry["end"], where)))
        except KeyError as exc:
            raise ConfigError(f"{where}: missing key {exc.args[0]!r}") from None
    names = [c.name for c in out]
    if len(set(names)) != len(names):
        raise ConfigError(f"{source}: duplicate crisis names")
    return out


def load_crises(path: str | Path | None = None) -> list[CrisisWindow]:
    """Load crisis windows from a TOML file, or the bundled defaults when ``path`` is None."""
    if path is None:
        text = resources.files(__package__).joinpath("crises.toml").read_text(encoding="utf-8")
        return parse_crises(tomllib.loads(text), "default crises")
    path = Path(path)
    try:
        with open(path, "rb") as fh:
            doc = tomllib.load(fh)
    except OSError as exc:
        raise ConfigError(f"{path}: cannot open ({exc.strerror})") from None
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from None
    return parse_crises(doc, str(path))


def find_crisis(crises: Sequence[CrisisWindow], name: str) -> CrisisWindow:
    for c in crises:
        if c.name == name:
            return c
    raise ConfigError(f"unknown crisis {name!r}; known: {', '.join(c.name for c in crises)}")


def write_panel(panel: PricePanel, price_csv_path: str | Path, sector_csv_path: str | Path) -> None:
    with open(price_csv_path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["date", "ticker", "close"])
        for t, day in enumerate(panel.dates):
            iso = day.isoformat()
            for i, ticker in enumerate(panel.tickers):
                w.writerow([iso, ticker, repr(float(panel.prices[t, i]))])
    with open(sector_csv_path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["ticker", "sector"])
        for ticker in panel.tickers:
            w.writerow([ticker, panel.sector_of[ticker]])

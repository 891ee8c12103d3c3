"""Random equal-weight portfolio search ranked by Sharpe ratio."""

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .collectivity import log_returns
from .errors import ConfigError, DataError, DegeneratePortfolioError
from .market_data import SECTORS, CrisisWindow, PricePanel, slice_window
from .rng import substream

log = logging.getLogger(__name__)

MAX_REDRAWS = 100
ALLOCATION_TOLERANCE = 1e-12
_STREAM_TAG = 2
_CHUNK = 4096
# relative variance floor below which a portfolio counts as riskless
_DEGENERATE_VAR = 1e-24
# portfolio variance this small relative to its members' counts as hedged to zero
_DEGENERATE_VAR_RATIO = 1e-12


@dataclass(frozen=True)
class SearchConfig:
    n_draws: int = 100_000
    k: int = 40
    top_fraction: float = 0.01
    risk_free: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.n_draws < 1:
            raise ConfigError("n_draws must be at least 1")
        if self.k < 1:
            raise ConfigError("portfolio size k must be at least 1")
        if not 0 < self.top_fraction <= 1:
            raise ConfigError("top_fraction must lie in (0, 1]")

    def retained(self, n: int | None = None) -> int:
        n = self.n_draws if n is None else n
        # guard against 0.01 * 100000 landing a hair above an integer
        return max(1, math.ceil(self.top_fraction * n - 1e-9))


@dataclass(frozen=True, eq=False)
class SectorAllocation:
    """Probability vector over ``SECTORS``."""

    proportions: np.ndarray
    atol: float = ALLOCATION_TOLERANCE

    def __post_init__(self):
        p = np.asarray(self.proportions, dtype=float)
        if p.shape != (len(SECTORS),):
            raise DataError(f"allocation must have {len(SECTORS)} entries, got shape {p.shape}")
        if np.any(p < 0) or not np.all(np.isfinite(p)):
            raise DataError("allocation entries must be finite and nonnegative")
        if abs(p.sum() - 1.0) > self.atol:
            raise DataError(f"allocation sums to {p.sum():.15g}, not 1")
        p.setflags(write=False)
        object.__setattr__(self, "proportions", p)

    @classmethod
    def from_percentages(cls, percentages: Sequence[float], atol: float = ALLOCATION_TOLERANCE) -> "SectorAllocation":
        """Build from a column of percentages; ``atol`` absorbs rounding in published tables."""
        return cls(np.asarray(percentages, dtype=float) / 100.0, atol=atol)

    @classmethod
    def from_counts(cls, counts: Sequence[float]) -> "SectorAllocation":
        c = np.asarray(counts, dtype=float)
        if c.sum() <= 0:
            raise DataError("allocation counts are all zero")
        return cls(c / c.sum())

    def as_dict(self) -> dict[str, float]:
        return dict(zip(SECTORS, self.proportions.tolist()))


@dataclass(frozen=True, eq=False)
class SearchResult:
    """Top portfolios, best first. ``portfolios`` holds column indices into the panel."""

    tickers: tuple[str, ...]
    portfolios: np.ndarray
    sharpe: np.ndarray
    draw_index: np.ndarray
    allocation: SectorAllocation
    n_evaluated: int

    def ranked_tickers(self) -> list[tuple[str, ...]]:
        return [tuple(self.tickers[i] for i in p) for p in self.portfolios]


def sharpe_from_series(portfolio_returns: Sequence[float], risk_free: float = 0.0) -> float:
    """Mean excess return over sample std (ddof=1) of a daily return series."""
    x = np.asarray(portfolio_returns, dtype=float)
    if x.size < 2:
        raise DataError("need at least two portfolio returns")
    sd = x.std(ddof=1)
    if not sd > math.sqrt(_DEGENERATE_VAR) * max(1.0, float(np.abs(x).max())):
        raise DegeneratePortfolioError("portfolio return series has zero variance")
    return float((x.mean() - risk_free) / sd)


def portfolio_sharpe(panel: PricePanel, tickers: Sequence[str], risk_free: float = 0.0) -> float:
    """Sharpe ratio of the equal-weight portfolio of ``tickers`` over the panel's dates."""
    if len(panel.dates) < 4:
        raise DataError("need at least 3 return observations")
    col = {t: i for i, t in enumerate(panel.tickers)}
    try:
        idx = [col[t] for t in tickers]
    except KeyError as exc:
        raise ConfigError(f"ticker {exc.args[0]!r} not in panel") from None
    if len(set(idx)) != len(idx):
        raise ConfigError("portfolio tickers must be distinct")
    r = np.asarray(log_returns(panel).returns)[:, idx]
    return sharpe_from_series(r.mean(axis=1), risk_free)


class _Moments:
    """Mean vector and covariance of daily log returns; portfolio Sharpe from them."""

    def __init__(self, R: np.ndarray):
        self.mu = R.mean(axis=0)
        self.cov = np.cov(R, rowvar=False, ddof=1).reshape(R.shape[1], R.shape[1])
        self.scale = max(1.0, float(np.abs(R).max()))

    def evaluate(self, idx: np.ndarray, risk_free: float) -> tuple[np.ndarray, np.ndarray]:
        """Sharpe ratios for a ``(m, k)`` index block and a mask of degenerate rows."""
        k = idx.shape[1]
        mean = self.mu[idx].mean(axis=1)
        var = self.cov[idx[:, :, None], idx[:, None, :]].sum(axis=(1, 2)) / (k * k)
        own = np.diagonal(self.cov)[idx].mean(axis=1)
        bad = ~(var > np.maximum(_DEGENERATE_VAR_RATIO * own, _DEGENERATE_VAR * self.scale**2))
        with np.errstate(invalid="ignore", divide="ignore"):
            sharpe = (mean - risk_free) / np.sqrt(np.where(bad, 1.0, var))
        return sharpe, bad


def _draw(seed: int, d: int, attempt: int, N: int, k: int) -> np.ndarray:
    return np.sort(substream(seed, _STREAM_TAG, d, attempt).choice(N, size=k, replace=False))


def _sample_chunk(moments: _Moments, config: SearchConfig, N: int, start: int, stop: int):
    draws = np.arange(start, stop)
    idx = np.array([_draw(config.seed, d, 0, N, config.k) for d in draws]).reshape(len(draws), config.k)
    sharpe, bad = moments.evaluate(idx, config.risk_free)
    for row in np.flatnonzero(bad):
        d = int(draws[row])
        for attempt in range(1, MAX_REDRAWS + 1):
            log.info("draw %d attempt %d rejected: zero-variance portfolio", d, attempt - 1)
            cand = _draw(config.seed, d, attempt, N, config.k)[None, :]
            s, b = moments.evaluate(cand, config.risk_free)
            if not b[0]:
                idx[row], sharpe[row] = cand[0], s[0]
                break
        else:
            raise DegeneratePortfolioError(f"draw {d}: no nondegenerate portfolio after {MAX_REDRAWS} redraws")
    return idx, sharpe, draws


def _top(idx: np.ndarray, sharpe: np.ndarray, draws: np.ndarray, n_top: int):
    # best Sharpe first; equal Sharpe -> earlier draw first
    order = np.lexsort((draws, -sharpe))[:n_top]
    return idx[order], sharpe[order], draws[order]


def run_search(
    panel: PricePanel,
    config: SearchConfig,
    *,
    portfolios: Iterable[Sequence[int]] | None = None,
    threads: int = 1,
) -> SearchResult:
    """Sample ``config.n_draws`` random k-subsets, rank by Sharpe, keep the top fraction.

    If ``portfolios`` is given (column-index tuples, e.g. every combination),
    those are evaluated in order instead of sampling; ``top_fraction`` then
    applies to their count.
    """
    N = panel.shape[1]
    if N < config.k:
        raise ConfigError(f"panel has {N} tickers, fewer than portfolio size k={config.k}")
    R = np.asarray(log_returns(panel).returns)
    if R.shape[0] < 3:
        raise DataError(f"need at least 3 return observations, got {R.shape[0]}")
    moments = _Moments(R)

    if portfolios is not None:
        idx = np.array([list(p) for p in portfolios], dtype=int)
        if idx.ndim != 2 or idx.shape[1] != config.k:
            raise ConfigError(f"explicit portfolios must each have k={config.k} members")
        sharpe, bad = moments.evaluate(idx, config.risk_free)
        if bad.any():
            raise DegeneratePortfolioError(f"explicit portfolio {int(np.flatnonzero(bad)[0])} has zero variance")
        n_total = idx.shape[0]
        draws = np.arange(n_total)
        top = _top(idx, sharpe, draws, config.retained(n_total))
    else:
        n_total = config.n_draws
        n_top = config.retained()
        bounds = [(s, min(s + _CHUNK, n_total)) for s in range(0, n_total, _CHUNK)]

        def one(b):
            return _top(*_sample_chunk(moments, config, N, *b), n_top)

        if threads > 1:
            with ThreadPoolExecutor(threads) as pool:
                parts = list(pool.map(one, bounds))
        else:
            parts = [one(b) for b in bounds]
        top = _top(*(np.concatenate(x) for x in zip(*parts)), n_top)

    top_idx, top_sharpe, top_draws = top
    counts = np.bincount(panel.sectors()[top_idx].ravel(), minlength=len(SECTORS))
    allocation = SectorAllocation(counts / counts.sum())
    return SearchResult(panel.tickers, top_idx, top_sharpe, top_draws, allocation, n_total)


def index_allocation(panel: PricePanel) -> SectorAllocation:
    """Sector shares by number of tickers (no capitalization weighting)."""
    return SectorAllocation.from_counts(panel.sector_counts())


def allocation_distance(p: SectorAllocation, q: SectorAllocation) -> float:
    """Half the L1 distance between two allocations (total variation)."""
    pp, qq = np.asarray(p.proportions), np.asarray(q.proportions)
    if pp.shape != qq.shape:
        raise ConfigError("allocations are over different sector universes")
    return float(0.5 * np.abs(pp - qq).sum())


@dataclass(frozen=True, eq=False)
class AllocationMatrix:
    labels: tuple[str, ...]
    allocations: dict[str, SectorAllocation]
    distances: np.ndarray


def distance_matrix(allocations: dict[str, SectorAllocation]) -> AllocationMatrix:
    labels = tuple(allocations)
    n = len(labels)
    d = np.zeros((n, n))
    for i in range(n):
        for j in range(i + 1, n):
            d[i, j] = d[j, i] = allocation_distance(allocations[labels[i]], allocations[labels[j]])
    return AllocationMatrix(labels, dict(allocations), d)


def crisis_allocation_matrix(
    panel: PricePanel,
    crises: Sequence[CrisisWindow],
    config: SearchConfig,
    *,
    threads: int = 1,
    index_label: str = "Index",
) -> AllocationMatrix:
    """Top-fraction allocation per crisis plus the index allocation, with pairwise distances."""
    allocations: dict[str, SectorAllocation] = {}
    for c in crises:
        allocations[c.name] = run_search(slice_window(panel, c), config, threads=threads).allocation
    if index_label in allocations:
        raise ConfigError(f"crisis name {index_label!r} clashes with the index label")
    allocations[index_label] = index_allocation(panel)
    return distance_matrix(allocations)

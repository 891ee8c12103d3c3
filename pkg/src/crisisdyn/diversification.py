"""Within/across-sector diversification grids from random (w, a) portfolios."""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .collectivity import DEFAULT_WINDOW, leading_collectivity, log_returns
from .errors import ConfigError, DataError, DegenerateAssetError
from .market_data import SECTORS, PricePanel
from .rng import substream

log = logging.getLogger(__name__)

MAX_REDRAWS = 100
# substream tag so (w, a, draw) keys never collide with other modules
_STREAM_TAG = 1


@dataclass(frozen=True)
class SamplingConfig:
    w_range: tuple[int, ...] = tuple(range(2, 10))
    a_range: tuple[int, ...] = tuple(range(2, 10))
    D: int = 1000
    S: int = DEFAULT_WINDOW
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "w_range", tuple(int(w) for w in self.w_range))
        object.__setattr__(self, "a_range", tuple(int(a) for a in self.a_range))
        if not self.w_range or not self.a_range:
            raise ConfigError("w_range and a_range must be nonempty")
        if min(self.w_range) < 2 or min(self.a_range) < 2:
            raise ConfigError("w and a must be at least 2")
        for r in (self.w_range, self.a_range):
            if list(r) != list(range(r[0], r[0] + len(r))):
                raise ConfigError(f"ranges must be consecutive integers, got {r}")
        if self.D < 1:
            raise ConfigError("D must be at least 1")
        if self.S < 2:
            raise ConfigError("S must be at least 2")


@dataclass(frozen=True, eq=False)
class DiversificationTable:
    """``mu[i, j]`` holds the cell with ``a = a_range[i]`` and ``w = w_range[j]``.

    Rows are numbers of sectors, columns equities per sector, as in the
    published tables.
    """

    w_range: tuple[int, ...]
    a_range: tuple[int, ...]
    mu: np.ndarray
    median_series: dict[tuple[int, int], np.ndarray] | None = field(default=None)

    def __post_init__(self):
        mu = np.asarray(self.mu, dtype=float)
        if mu.shape != (len(self.a_range), len(self.w_range)):
            raise DataError(f"mu grid shape {mu.shape} does not match a x w ranges")
        object.__setattr__(self, "mu", mu)

    def __getitem__(self, wa: tuple[int, int]) -> float:
        w, a = wa
        return float(self.mu[self.a_range.index(a), self.w_range.index(w)])

    def __contains__(self, wa) -> bool:
        w, a = wa
        return w in self.w_range and a in self.a_range


@dataclass(frozen=True)
class GreedyPath:
    steps: tuple[tuple[int, int, float], ...]

    @property
    def cells(self) -> list[tuple[int, int]]:
        return [(w, a) for w, a, _ in self.steps]

    @property
    def final_mu(self) -> float:
        return self.steps[-1][2]

    def __len__(self) -> int:
        return len(self.steps)


def _sector_members(sectors: np.ndarray) -> dict[int, np.ndarray]:
    return {s: np.flatnonzero(sectors == s) for s in range(len(SECTORS)) if np.any(sectors == s)}


def sample_portfolio(rng: np.random.Generator, panel: PricePanel, w: int, a: int) -> list[str]:
    """Pick ``a`` sectors uniformly, then ``w`` distinct tickers uniformly inside each."""
    idx = _sample_indices(rng, _sector_members(panel.sectors()), w, a)
    return [panel.tickers[i] for i in idx]


def _sample_indices(rng: np.random.Generator, members: dict[int, np.ndarray], w: int, a: int) -> np.ndarray:
    eligible = [s for s, m in members.items() if m.size >= w]
    if len(eligible) < a:
        counts = ", ".join(f"{SECTORS[s]}={m.size}" for s, m in members.items())
        raise ConfigError(
            f"(w={w}, a={a}) needs {a} sectors with >= {w} tickers; sector counts: {counts or 'none'}"
        )
    chosen = rng.choice(eligible, size=a, replace=False)
    return np.concatenate([rng.choice(members[s], size=w, replace=False) for s in chosen])


def _draw_series(R: np.ndarray, tickers, members, w: int, a: int, d: int, config: SamplingConfig) -> np.ndarray:
    for attempt in range(MAX_REDRAWS + 1):
        rng = substream(config.seed, _STREAM_TAG, w, a, d, attempt)
        idx = _sample_indices(rng, members, w, a)
        try:
            return leading_collectivity(R[:, idx], config.S, [tickers[i] for i in idx])
        except DegenerateAssetError as exc:
            log.info("(w=%d, a=%d) draw %d attempt %d rejected: %s", w, a, d, attempt, exc)
    raise DataError(f"(w={w}, a={a}) draw {d}: no nondegenerate portfolio after {MAX_REDRAWS} redraws")


def _draws_matrix(panel: PricePanel, config: SamplingConfig, w: int, a: int, threads: int = 1) -> np.ndarray:
    returns = log_returns(panel)
    R = np.asarray(returns.returns)
    if R.shape[0] < config.S + 1:
        raise DataError(f"window has {R.shape[0]} returns; need at least S+1={config.S + 1}")
    members = _sector_members(panel.sectors())

    def one(d: int) -> np.ndarray:
        return _draw_series(R, panel.tickers, members, w, a, d, config)

    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            rows = list(pool.map(one, range(config.D)))
    else:
        rows = [one(d) for d in range(config.D)]
    return np.vstack(rows)


def median_collectivity(panel: PricePanel, config: SamplingConfig, w: int, a: int, threads: int = 1) -> np.ndarray:
    """Median over ``config.D`` draws of each draw's leading normalized eigenvalue, per timestep.

    Each draw keeps the same portfolio for every timestep. For even ``D`` the
    median is the mean of the two central order statistics.
    """
    return np.median(_draws_matrix(panel, config, w, a, threads), axis=0)


def mu_table(panel: PricePanel, config: SamplingConfig, threads: int = 1, keep_series: bool = False) -> DiversificationTable:
    """Temporal mean of the median series for every ``(w, a)`` cell."""
    cells = [(w, a) for a in config.a_range for w in config.w_range]
    # validate every cell before the expensive part
    members = _sector_members(panel.sectors())
    for w, a in cells:
        _sample_indices(np.random.default_rng(0), members, w, a)

    def one(cell):
        w, a = cell
        return median_collectivity(panel, config, w, a)

    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            series = list(pool.map(one, cells))
    else:
        series = [one(c) for c in cells]

    mu = np.array([s.mean() for s in series]).reshape(len(config.a_range), len(config.w_range))
    kept = dict(zip(cells, series)) if keep_series else None
    return DiversificationTable(config.w_range, config.a_range, mu, kept)


def greedy_path(table: DiversificationTable, tie: str = "w") -> GreedyPath:
    """Staircase from the smallest cell, stepping to whichever neighbour lowers mu most.

    Neighbours are ``(w+1, a)`` and ``(w, a+1)``; at the grid edge only one
    exists. The walk stops once no admissible move strictly decreases mu.
    ``tie`` selects the coordinate incremented when both moves give equal mu.
    """
    if tie not in ("w", "a"):
        raise ConfigError("tie must be 'w' or 'a'")
    w, a = table.w_range[0], table.a_range[0]
    steps = [(w, a, table[w, a])]
    while True:
        here = table[w, a]
        moves = [m for m in ((w + 1, a), (w, a + 1)) if m in table]
        if not moves:
            break
        # candidate order puts the tie-winner first; min() keeps the first of equals
        if tie == "a":
            moves.reverse()
        nxt = min(moves, key=lambda m: table[m])
        if not table[nxt] < here:
            break
        w, a = nxt
        steps.append((w, a, table[w, a]))
    return GreedyPath(tuple(steps))


def marginal_means(table: DiversificationTable) -> tuple[np.ndarray, np.ndarray]:
    """``(mu_w, mu_a)``: averages over ``a`` for each ``w``, and over ``w`` for each ``a``."""
    return table.mu.mean(axis=0), table.mu.mean(axis=1)

"""Log returns, rolling correlation matrices and their normalized spectra."""

from __future__ import annotations

import datetime as dt
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Iterator, Mapping

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .distributions import EmpiricalDistribution
from .errors import DataError, DegenerateAssetError, NumericalError
from .market_data import CrisisWindow, PricePanel, slice_window

DEFAULT_WINDOW = 60
PSD_TOLERANCE = 1e-8
UNIT_DIAGONAL_TOLERANCE = 1e-9
# std below this (relative to the column's scale) counts as zero variance
_DEGENERATE_STD = 1e-12
_DEGENERATE_VAR_RATIO = 1e-20


@dataclass(frozen=True, eq=False)
class ReturnPanel:
    dates: tuple[dt.date, ...]
    tickers: tuple[str, ...]
    returns: np.ndarray
    sector_of: Mapping[str, str]

    @property
    def T(self) -> int:
        return self.returns.shape[0]

    @property
    def N(self) -> int:
        return self.returns.shape[1]


@dataclass(frozen=True, eq=False)
class CorrelationMatrix:
    t: int
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim != 2 or v.shape[0] != v.shape[1]:
            raise DataError(f"correlation matrix must be square, got {v.shape}")
        if not np.array_equal(v, v.T):
            raise DataError("correlation matrix is not symmetric")
        if np.max(np.abs(np.diag(v) - 1.0), initial=0.0) > UNIT_DIAGONAL_TOLERANCE:
            raise DataError("correlation matrix diagonal is not 1")
        if np.any(np.abs(v) > 1.0):
            raise DataError("correlation entries outside [-1, 1]")


@dataclass(frozen=True, eq=False)
class CollectivitySeries:
    """``spectra[k]`` is the normalized spectrum at timestep ``timestamps[k]``."""

    timestamps: np.ndarray
    dates: tuple[dt.date, ...]
    spectra: np.ndarray

    @property
    def leading(self) -> np.ndarray:
        return self.spectra[:, 0]


def log_returns(panel: PricePanel) -> ReturnPanel:
    if panel.prices.shape[0] < 2:
        raise DataError("need at least two dates to form returns")
    r = np.log(panel.prices[1:] / panel.prices[:-1])
    r.setflags(write=False)
    return ReturnPanel(panel.dates[1:], panel.tickers, r, panel.sector_of)


def _check_scale(std: np.ndarray, block: np.ndarray, tickers) -> None:
    scale = np.maximum(np.abs(block).max(axis=0), 1.0)
    bad = np.flatnonzero(~(std > _DEGENERATE_STD * scale))
    if bad.size:
        raise DegenerateAssetError(tickers[bad[0]] if tickers is not None else str(bad[0]))


def standardize_block(block: np.ndarray, tickers=None) -> np.ndarray:
    """Center each column and scale to unit sample std (ddof=1)."""
    block = np.asarray(block, dtype=float)
    centered = block - block.mean(axis=0)
    std = centered.std(axis=0, ddof=1)
    _check_scale(std, block, tickers)
    return centered / std


def standardize_window(returns: ReturnPanel, t: int, S: int) -> np.ndarray:
    """Standardized block of returns ``t-S+1..t`` (1-based timesteps), shape ``(S, N)``."""
    if S < 2:
        raise DataError(f"window S={S} must be at least 2")
    if not S <= t <= returns.T:
        raise DataError(f"timestep t={t} outside {S}..{returns.T}")
    return standardize_block(returns.returns[t - S : t], returns.tickers)


def _correlation_from_standardized(z: np.ndarray) -> np.ndarray:
    c = z.T @ z / (z.shape[0] - 1)
    c = 0.5 * (c + c.T)
    np.clip(c, -1.0, 1.0, out=c)
    return c


def iter_rolling_correlation(returns: ReturnPanel, S: int) -> Iterator[CorrelationMatrix]:
    if not 2 <= S <= returns.T:
        raise DataError(f"need T >= S >= 2, got T={returns.T}, S={S}")
    for t in range(S, returns.T + 1):
        z = standardize_window(returns, t, S)
        yield CorrelationMatrix(t, _correlation_from_standardized(z))


def rolling_correlation(returns: ReturnPanel, S: int) -> list[CorrelationMatrix]:
    """One correlation matrix per timestep ``t = S..T``.

    Holds ``T - S + 1`` dense ``N x N`` matrices; use
    :func:`iter_rolling_correlation` for wide panels.
    """
    return list(iter_rolling_correlation(returns, S))


def normalize_eigenvalues(eigenvalues: np.ndarray) -> np.ndarray:
    """Sort descending along the last axis, zero tiny negatives, divide by the sum."""
    ev = np.sort(np.asarray(eigenvalues, dtype=float), axis=-1)[..., ::-1]
    if np.any(ev < -PSD_TOLERANCE):
        raise NumericalError(f"correlation matrix is not PSD (eigenvalue {ev.min():.3g})")
    ev = np.where(ev < 0, 0.0, ev)
    return ev / ev.sum(axis=-1, keepdims=True)


def eigen_spectrum(matrix: CorrelationMatrix | np.ndarray) -> np.ndarray:
    values = matrix.values if isinstance(matrix, CorrelationMatrix) else np.asarray(matrix, dtype=float)
    try:
        ev = np.linalg.eigvalsh(values)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"eigensolver failed: {exc}") from None
    return normalize_eigenvalues(ev)


def collectivity_series(returns: ReturnPanel, S: int = DEFAULT_WINDOW, threads: int = 1) -> CollectivitySeries:
    """Normalized spectra of every rolling correlation matrix.

    Timesteps are solved independently; ``threads`` only changes wall time.
    """
    if not 2 <= S <= returns.T:
        raise DataError(f"need T >= S >= 2, got T={returns.T}, S={S}")
    ts = list(range(S, returns.T + 1))

    def one(t: int) -> np.ndarray:
        z = standardize_window(returns, t, S)
        return eigen_spectrum(_correlation_from_standardized(z))

    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            spectra = list(pool.map(one, ts))
    else:
        spectra = [one(t) for t in ts]
    return CollectivitySeries(np.array(ts), tuple(returns.dates[t - 1] for t in ts), np.array(spectra))


def leading_collectivity(returns: np.ndarray, S: int, tickers=None) -> np.ndarray:
    """Normalized leading eigenvalue of each rolling window of a ``(T, n)`` block.

    Vectorized over windows; returns an array of length ``T - S + 1``.
    """
    returns = np.asarray(returns, dtype=float)
    T, n = returns.shape
    if not 2 <= S <= T:
        raise DataError(f"need T >= S >= 2, got T={T}, S={S}")
    # shifting columns leaves every window's covariance unchanged and keeps
    # the sum-of-squares identity below well conditioned
    shifted = returns - returns.mean(axis=0)
    windows = sliding_window_view(shifted, S, axis=0)  # (W, n, S)
    gram = np.matmul(windows, windows.transpose(0, 2, 1))
    sums = windows.sum(axis=2)
    cov = gram - sums[:, :, None] * sums[:, None, :] / S
    var = np.diagonal(cov, axis1=1, axis2=2)
    raw = np.diagonal(gram, axis1=1, axis2=2)
    floor = (S - 1) * (_DEGENERATE_STD * np.maximum(np.abs(returns).max(axis=0), 1.0)) ** 2
    bad = ~(var > np.maximum(_DEGENERATE_VAR_RATIO * raw, floor))
    if bad.any():
        col = int(np.nonzero(bad)[1][0])
        raise DegenerateAssetError(tickers[col] if tickers is not None else str(col))
    d = np.sqrt(var)
    corr = cov / (d[:, :, None] * d[:, None, :])
    corr = 0.5 * (corr + corr.transpose(0, 2, 1))
    try:
        ev = np.linalg.eigvalsh(corr)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"eigensolver failed: {exc}") from None
    return normalize_eigenvalues(ev)[:, 0]


def correlation_distribution(panel: PricePanel, window: CrisisWindow | None = None) -> EmpiricalDistribution:
    """Sorted upper-triangle Pearson coefficients of whole-window log returns."""
    if window is not None:
        panel = slice_window(panel, window)
    if len(panel.dates) < 3:
        raise DataError(f"need at least 3 dates for correlations, got {len(panel.dates)}")
    if panel.shape[1] < 2:
        raise DataError("need at least two tickers for pairwise correlations")
    r = log_returns(panel)
    c = _correlation_from_standardized(standardize_block(r.returns, r.tickers))
    iu = np.triu_indices(c.shape[0], k=1)
    return EmpiricalDistribution(c[iu])

"""Wasserstein alignment of return distributions across crises.

Each crisis's pooled return distribution is mapped onto a reference crisis
by the scale-and-shift ``x -> a*x + b`` minimizing the order-1 Wasserstein
distance; sector distributions are then compared after the same mapping and
clustered.
"""

from __future__ import annotations

import logging
import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.cluster.hierarchy import linkage
from scipy.spatial.distance import squareform

from .collectivity import log_returns
from .distributions import QUANTILE_GRID_SIZE, EmpiricalDistribution, midpoint_grid
from .errors import ConfigError, DataError
from .market_data import SECTORS, CrisisWindow, PricePanel, slice_window

log = logging.getLogger(__name__)

MIN_SCALE = 1e-6
GOLDEN_TOL = 1e-8
_INVPHI = (math.sqrt(5.0) - 1.0) / 2.0


class ScaleUnidentifiableWarning(UserWarning):
    pass


@dataclass(frozen=True)
class AffineOperator:
    a: float = 1.0
    b: float = 0.0

    def __post_init__(self):
        if not (self.a >= MIN_SCALE and math.isfinite(self.a) and math.isfinite(self.b)):
            raise ConfigError(f"affine operator needs finite a >= {MIN_SCALE} and finite b, got ({self.a}, {self.b})")

    @classmethod
    def identity(cls) -> "AffineOperator":
        return cls(1.0, 0.0)


@dataclass(frozen=True)
class OperatorFit:
    op: AffineOperator
    residual: float


@dataclass(frozen=True, eq=False)
class AlignedDistanceMatrix:
    labels: tuple[tuple[str, str], ...]
    distances: np.ndarray
    linkage: np.ndarray
    operators: dict[str, OperatorFit]
    omitted: tuple[tuple[str, str], ...] = ()

    def dendrogram(self) -> dict:
        """Nested merge tree: leaves ``{"label", "crisis", "sector"}``, nodes ``{"height", "size", "children"}``."""
        n = len(self.labels)
        nodes: list[dict] = [
            {"id": i, "label": f"{c} | {s}", "crisis": c, "sector": s, "height": 0.0, "size": 1}
            for i, (c, s) in enumerate(self.labels)
        ]
        for k, (i, j, h, size) in enumerate(self.linkage):
            nodes.append(
                {"id": n + k, "height": float(h), "size": int(size), "children": [nodes[int(i)], nodes[int(j)]]}
            )
        return nodes[-1]


def _as_dist(x) -> EmpiricalDistribution:
    return x if isinstance(x, EmpiricalDistribution) else EmpiricalDistribution(x)


def wasserstein1(f, g, m: int = QUANTILE_GRID_SIZE) -> float:
    """Mean absolute gap between the two quantile functions on ``m`` midpoint levels."""
    f, g = _as_dist(f), _as_dist(g)
    return float(np.mean(np.abs(f.quantiles(m) - g.quantiles(m))))


def wasserstein2(f, g, m: int = QUANTILE_GRID_SIZE) -> float:
    f, g = _as_dist(f), _as_dist(g)
    return float(np.sqrt(np.mean((f.quantiles(m) - g.quantiles(m)) ** 2)))


def apply_operator(op: AffineOperator, f) -> EmpiricalDistribution:
    """Push ``f`` forward through ``x -> a*x + b``."""
    return EmpiricalDistribution(op.a * _as_dist(f).sample + op.b)


def _inner(a: float, qf: np.ndarray, qg: np.ndarray) -> tuple[float, float]:
    b = float(np.median(qg - a * qf))
    return float(np.mean(np.abs(a * qf + b - qg))), b


def _iqr(x: EmpiricalDistribution) -> float:
    q1, q3 = x.quantile([0.25, 0.75])
    return float(q3 - q1)


def fit_operator(f, g, m: int = QUANTILE_GRID_SIZE, order: int = 1) -> OperatorFit:
    """Scale and shift minimizing the Wasserstein distance from ``T_{a,b} f`` to ``g``.

    Order 1 (default): the objective ``phi(a, b) = mean_j |a q_f(u_j) + b - q_g(u_j)|``
    is jointly convex, the optimal ``b`` for fixed ``a`` is a median, and ``a``
    is found by golden-section search on ``[1e-6, a_max]``.

    Order 2 is a closed-form least-squares fit of the quantile functions,
    kept as a cross-check.
    """
    f, g = _as_dist(f), _as_dist(g)
    qf, qg = f.quantiles(m), g.quantiles(m)

    if order == 2:
        vf = float(np.var(qf))
        a = max(float(np.cov(qf, qg, bias=True)[0, 1]) / vf, MIN_SCALE) if vf > 0 else MIN_SCALE
        b = float(qg.mean() - a * qf.mean())
        op = AffineOperator(a, b)
        return OperatorFit(op, wasserstein2(apply_operator(op, f), g, m))
    if order != 1:
        raise ConfigError(f"unsupported Wasserstein order {order}")

    if f.is_point_mass:
        if not g.is_point_mass:
            warnings.warn("source distribution is a point mass; scale pinned to its minimum", ScaleUnidentifiableWarning)
        phi, b = _inner(MIN_SCALE, qf, qg)
        return OperatorFit(AffineOperator(MIN_SCALE, b), phi)

    spread_f, spread_g = _iqr(f), _iqr(g)
    if spread_f <= 0 or spread_g <= 0:
        spread_f = float(qf[-1] - qf[0])
        spread_g = float(qg[-1] - qg[0])
    a_max = max(100.0 * spread_g / spread_f, 2.0 * MIN_SCALE)

    lo, hi = MIN_SCALE, a_max
    x1 = hi - _INVPHI * (hi - lo)
    x2 = lo + _INVPHI * (hi - lo)
    p1, p2 = _inner(x1, qf, qg)[0], _inner(x2, qf, qg)[0]
    while hi - lo >= GOLDEN_TOL:
        if p1 <= p2:
            hi, x2, p2 = x2, x1, p1
            x1 = hi - _INVPHI * (hi - lo)
            p1 = _inner(x1, qf, qg)[0]
        else:
            lo, x1, p1 = x1, x2, p2
            x2 = lo + _INVPHI * (hi - lo)
            p2 = _inner(x2, qf, qg)[0]

    best = min((_inner(a, qf, qg) + (a,) for a in (lo, hi, x1, x2, 0.5 * (lo + hi))), key=lambda r: r[0])
    phi, b, a = _polish(best, qf, qg)
    return OperatorFit(AffineOperator(a, b), phi)


def _polish(best: tuple[float, float, float], qf: np.ndarray, qg: np.ndarray, k: int = 12):
    """Snap to an exact vertex of the piecewise-linear objective.

    Some L1 optimum passes through two of the points ``(q_f, q_g)``; the
    golden-section answer lies within 1e-8 of it, so the two points are
    among those with the smallest residuals there.
    """
    phi, b, a = best
    near = np.argsort(np.abs(a * qf + b - qg), kind="stable")[:k]
    for i in range(len(near)):
        for j in range(i + 1, len(near)):
            dx = qf[near[i]] - qf[near[j]]
            if dx == 0:
                continue
            slope = float((qg[near[i]] - qg[near[j]]) / dx)
            if slope >= MIN_SCALE:
                cand_phi, cand_b = _inner(slope, qf, qg)
                if cand_phi < phi:
                    phi, b, a = cand_phi, cand_b, slope
    return phi, b, a


def pairwise_w1(dists: Sequence[EmpiricalDistribution], m: int = QUANTILE_GRID_SIZE, threads: int = 1) -> np.ndarray:
    q = np.array([d.quantiles(m) for d in dists])
    n = len(dists)
    pairs = [(i, j) for i in range(n) for j in range(i + 1, n)]

    def one(p):
        i, j = p
        return float(np.mean(np.abs(q[i] - q[j])))

    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            vals = list(pool.map(one, pairs))
    else:
        vals = [one(p) for p in pairs]
    out = np.zeros((n, n))
    for (i, j), v in zip(pairs, vals):
        out[i, j] = out[j, i] = v
    return out


def cluster(distances: np.ndarray, method: str = "average") -> np.ndarray:
    """Agglomerative clustering; returns a scipy-style ``(n-1, 4)`` linkage matrix."""
    if method not in ("average", "complete"):
        raise ConfigError(f"unsupported linkage {method!r}")
    if distances.shape[0] < 2:
        return np.zeros((0, 4))
    return linkage(squareform(distances, checks=False), method=method)


def _pooled(panel: PricePanel, cols: np.ndarray | None = None) -> np.ndarray:
    r = np.asarray(log_returns(panel).returns)
    return (r if cols is None else r[:, cols]).ravel()


def align_and_cluster(
    panel: PricePanel,
    crises: Sequence[CrisisWindow],
    reference: str,
    *,
    m: int = QUANTILE_GRID_SIZE,
    order: int = 1,
    method: str = "average",
    threads: int = 1,
) -> AlignedDistanceMatrix:
    """Map each crisis onto ``reference``, then compare and cluster every (crisis, sector) distribution."""
    names = [c.name for c in crises]
    if reference not in names:
        raise ConfigError(f"reference crisis {reference!r} not among {names}")
    slices = {c.name: slice_window(panel, c) for c in crises}
    for name, s in slices.items():
        if len(s.dates) < 2:
            raise DataError(f"crisis {name!r} has fewer than 2 dates on the panel")

    ref_pool = EmpiricalDistribution(_pooled(slices[reference]))
    operators: dict[str, OperatorFit] = {}
    for name in names:
        if name == reference:
            operators[name] = OperatorFit(AffineOperator.identity(), 0.0)
        else:
            operators[name] = fit_operator(EmpiricalDistribution(_pooled(slices[name])), ref_pool, m, order)

    labels, adjusted, omitted = [], [], []
    for name in names:
        s = slices[name]
        sectors = s.sectors()
        for k, sector in enumerate(SECTORS):
            cols = np.flatnonzero(sectors == k)
            pooled = _pooled(s, cols) if cols.size else np.empty(0)
            if pooled.size < 2:
                omitted.append((name, sector))
                continue
            labels.append((name, sector))
            adjusted.append(apply_operator(operators[name].op, pooled))
    if omitted:
        log.warning("omitted empty (crisis, sector) cells: %s", omitted)
    if not labels:
        raise DataError("no (crisis, sector) cell has returns")

    d = pairwise_w1(adjusted, m, threads)
    return AlignedDistanceMatrix(tuple(labels), d, cluster(d, method), operators, tuple(omitted))

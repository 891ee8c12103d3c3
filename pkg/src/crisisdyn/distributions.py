"""Sorted empirical samples with quantile-function access."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DataError

QUANTILE_GRID_SIZE = 1000


def midpoint_grid(m: int = QUANTILE_GRID_SIZE) -> np.ndarray:
    """``u_j = (j - 1/2) / m`` for ``j = 1..m``."""
    return (np.arange(1, m + 1) - 0.5) / m


@dataclass(frozen=True, eq=False)
class EmpiricalDistribution:
    sample: np.ndarray

    def __post_init__(self):
        x = np.sort(np.asarray(self.sample, dtype=float).ravel())
        if x.size == 0:
            raise DataError("empirical distribution needs at least one value")
        if not np.all(np.isfinite(x)):
            raise DataError("empirical distribution contains non-finite values")
        x.setflags(write=False)
        object.__setattr__(self, "sample", x)

    def __len__(self) -> int:
        return self.sample.size

    @property
    def is_point_mass(self) -> bool:
        return self.sample[0] == self.sample[-1]

    def quantile(self, u) -> np.ndarray:
        """Quantile function by linear interpolation between order statistics."""
        return np.quantile(self.sample, u, method="linear")

    def quantiles(self, m: int = QUANTILE_GRID_SIZE) -> np.ndarray:
        return self.quantile(midpoint_grid(m))

    def mean(self) -> float:
        return float(self.sample.mean())

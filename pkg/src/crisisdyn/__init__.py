"""Collective dynamics of equity panels across financial crises."""

from .collectivity import (
    CollectivitySeries,
    CorrelationMatrix,
    ReturnPanel,
    collectivity_series,
    correlation_distribution,
    eigen_spectrum,
    log_returns,
    rolling_correlation,
    standardize_window,
)
from .distribution_align import (
    AffineOperator,
    AlignedDistanceMatrix,
    align_and_cluster,
    apply_operator,
    fit_operator,
    wasserstein1,
)
from .distributions import EmpiricalDistribution
from .diversification import (
    DiversificationTable,
    GreedyPath,
    SamplingConfig,
    greedy_path,
    marginal_means,
    median_collectivity,
    mu_table,
    sample_portfolio,
)
from .errors import ConfigError, CrisisDynError, DataError, DegenerateAssetError, NumericalError
from .market_data import SECTORS, CrisisWindow, PricePanel, load_crises, load_panel, slice_window
from .portfolio_search import (
    SearchConfig,
    SectorAllocation,
    allocation_distance,
    crisis_allocation_matrix,
    portfolio_sharpe,
    run_search,
)
from .synthetic_market import FactorModelSpec, generate

__version__ = "0.1.0"

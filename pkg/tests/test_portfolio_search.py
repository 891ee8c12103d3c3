import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import reference_tables as ref
from conftest import panel_from_returns
from crisisdyn.errors import ConfigError, DataError, DegeneratePortfolioError
from crisisdyn.market_data import SECTORS, CrisisWindow
from crisisdyn.portfolio_search import (
    SearchConfig,
    SectorAllocation,
    allocation_distance,
    crisis_allocation_matrix,
    distance_matrix,
    index_allocation,
    portfolio_sharpe,
    run_search,
    sharpe_from_series,
)
from crisisdyn.synthetic_market import FactorModelSpec, generate


def _alloc(name):
    return SectorAllocation.from_percentages(ref.ALLOCATION_PCT[name], atol=ref.ALLOCATION_ROUNDING_ATOL)


class TestSharpe:
    def test_constant_series(self):
        with pytest.raises(DegeneratePortfolioError):
            sharpe_from_series([0.01, 0.01, 0.01])

    def test_hand_example(self):
        assert sharpe_from_series([0.02, 0.0]) == pytest.approx(0.01 / 0.0141421356, rel=1e-8)
        assert sharpe_from_series([0.02, 0.0]) == pytest.approx(0.7071, abs=1e-4)

    def test_risk_free_equal_to_mean(self):
        assert sharpe_from_series([0.03, 0.01, -0.01], risk_free=0.01) == pytest.approx(0.0, abs=1e-15)

    def test_panel_sharpe_matches_moments(self, small_panel):
        r = np.log(small_panel.prices[1:] / small_panel.prices[:-1])
        idx = [0, 5, 9]
        w = np.full(3, 1 / 3)
        mu, cov = r[:, idx].mean(axis=0), np.cov(r[:, idx], rowvar=False)
        expected = (w @ mu) / np.sqrt(w @ cov @ w)
        got = portfolio_sharpe(small_panel, [small_panel.tickers[i] for i in idx])
        assert got == pytest.approx(expected, rel=1e-12)

    def test_panel_sharpe_errors(self, small_panel):
        with pytest.raises(ConfigError):
            portfolio_sharpe(small_panel, ["nope"])
        with pytest.raises(ConfigError):
            portfolio_sharpe(small_panel, [small_panel.tickers[0]] * 2)


class TestRunSearch:
    def test_n_equals_k(self, small_panel):
        cfg = SearchConfig(n_draws=50, k=small_panel.shape[1], top_fraction=0.1, seed=1)
        res = run_search(small_panel, cfg)
        assert len(res.portfolios) == 5
        assert all(sorted(p) == list(range(small_panel.shape[1])) for p in res.portfolios.tolist())
        np.testing.assert_allclose(res.allocation.proportions, index_allocation(small_panel).proportions, atol=1e-15)

    def test_k_too_large(self, small_panel):
        with pytest.raises(ConfigError, match="fewer than portfolio size"):
            run_search(small_panel, SearchConfig(k=17))

    def test_config_validation(self):
        with pytest.raises(ConfigError):
            SearchConfig(top_fraction=0)
        with pytest.raises(ConfigError):
            SearchConfig(n_draws=0)
        assert SearchConfig().retained() == 1000
        assert SearchConfig(n_draws=150, top_fraction=0.01).retained() == 2

    def test_top_fraction_one_matches_index(self, factor_panel):
        cfg = SearchConfig(n_draws=4000, k=10, top_fraction=1.0, seed=2)
        res = run_search(factor_panel, cfg)
        p = index_allocation(factor_panel).proportions
        sigma = np.sqrt(p * (1 - p) / (cfg.k * cfg.n_draws))
        assert np.all(np.abs(res.allocation.proportions - p) <= 3 * sigma)

    def test_ranked_and_distinct(self, factor_panel):
        res = run_search(factor_panel, SearchConfig(n_draws=3000, k=8, top_fraction=0.02, seed=4))
        assert len(res.sharpe) == 60
        assert np.all(np.diff(res.sharpe) <= 0)
        assert all(len(set(p)) == 8 for p in res.portfolios.tolist())
        for p, s in zip(res.ranked_tickers()[:5], res.sharpe[:5]):
            sl = factor_panel
            assert portfolio_sharpe(sl, p) == pytest.approx(s, rel=1e-10)

    def test_deterministic_across_threads(self, factor_panel):
        cfg = SearchConfig(n_draws=9000, k=6, top_fraction=0.01, seed=7)
        a = run_search(factor_panel, cfg, threads=1)
        b = run_search(factor_panel, cfg, threads=4)
        assert np.array_equal(a.portfolios, b.portfolios)
        assert np.array_equal(a.sharpe, b.sharpe)
        assert np.array_equal(a.draw_index, b.draw_index)

    def test_ties_broken_by_draw_index(self, small_panel):
        cfg = SearchConfig(n_draws=200, k=small_panel.shape[1], top_fraction=0.05, seed=1)
        res = run_search(small_panel, cfg)
        assert res.draw_index.tolist() == list(range(10))

    def test_exhaustive_equivalence(self):
        rng = np.random.default_rng(12)
        x = 0.001 * rng.standard_normal((60, 1)) + 0.01 * rng.standard_normal((60, 12)) + rng.uniform(-0.002, 0.002, 12)
        panel = panel_from_returns(x, [SECTORS[i % 4] for i in range(12)])
        combos = list(itertools.combinations(range(12), 3))
        res = run_search(panel, SearchConfig(k=3, top_fraction=1.0), portfolios=combos)
        brute = sorted(
            ((portfolio_sharpe(panel, [panel.tickers[i] for i in c]), n, c) for n, c in enumerate(combos)),
            key=lambda r: (-r[0], r[1]),
        )
        assert [tuple(p) for p in res.portfolios.tolist()] == [c for _, _, c in brute]
        np.testing.assert_allclose(res.sharpe, [s for s, _, _ in brute], rtol=1e-10)

    def test_degenerate_redraw(self, caplog):
        import logging

        rng = np.random.default_rng(3)
        x = 0.01 * rng.standard_normal((40, 4))
        x[:, 0] = 0.001
        x[:, 1] = 0.002
        panel = panel_from_returns(x, ["Energy"] * 4)
        with caplog.at_level(logging.INFO, logger="crisisdyn.portfolio_search"):
            res = run_search(panel, SearchConfig(n_draws=200, k=2, top_fraction=1.0, seed=0))
        assert "rejected" in caplog.text
        assert not any(sorted(p) == [0, 1] for p in res.portfolios.tolist())

    def test_explicit_degenerate(self):
        r = np.random.default_rng(0).normal(0, 0.01, 15)
        x = np.column_stack([r, -r])
        panel = panel_from_returns(x, ["Energy"] * 2)
        with pytest.raises(DegeneratePortfolioError):
            run_search(panel, SearchConfig(k=2, top_fraction=1.0), portfolios=[(0, 1)])

    def test_sector_tilt_exhaustive(self):
        spec = FactorModelSpec(n_sectors=4, stocks_per_sector=5, T=250, market_beta=0.004, sector_beta=0.002,
                               idio_sigma=0.01, drift=(0.002, 0.001, 0.001, 0.001), seed=21)
        panel = generate(spec)
        combos = list(itertools.combinations(range(20), 5))
        res = run_search(panel, SearchConfig(k=5, top_fraction=0.01), portfolios=combos)
        assert res.allocation.proportions[0] > index_allocation(panel).proportions[0]
        sampled = run_search(panel, SearchConfig(n_draws=20_000, k=5, top_fraction=0.01, seed=3))
        assert sampled.allocation.proportions[0] > index_allocation(panel).proportions[0]


probability = st.lists(st.floats(0, 1, allow_subnormal=False), min_size=11, max_size=11).filter(lambda v: sum(v) > 1e-6)


def _normalize(v):
    v = np.asarray(v)
    return SectorAllocation(v / v.sum(), atol=1e-9)


class TestAllocationDistance:
    def test_published_values(self):
        assert allocation_distance(_alloc("COVID-19"), _alloc("Index")) == pytest.approx(0.4285, abs=1e-12)
        assert allocation_distance(_alloc("COVID-19"), _alloc("Dot-com")) == pytest.approx(0.073, abs=1e-12)

    def test_identity_and_disjoint(self):
        p = _normalize([1, 1, 1, 0, 0, 0, 0, 0, 0, 0, 0])
        q = _normalize([0, 0, 0, 1, 2, 0, 0, 0, 0, 0, 0])
        assert allocation_distance(p, p) == 0
        assert allocation_distance(p, q) == 1.0

    @given(probability, probability, probability)
    @settings(max_examples=200, deadline=None)
    def test_metric_axioms(self, x, y, z):
        p, q, r = _normalize(x), _normalize(y), _normalize(z)
        d = allocation_distance
        assert d(p, q) == d(q, p)
        assert d(p, p) == 0
        assert 0 <= d(p, q) <= 1 + 1e-12
        assert d(p, r) <= d(p, q) + d(q, r) + 1e-12
        overlap = np.any((p.proportions > 0) & (q.proportions > 0))
        if overlap:
            assert d(p, q) < 1

    def test_allocation_validation(self):
        with pytest.raises(DataError):
            SectorAllocation(np.full(11, 0.1))
        with pytest.raises(DataError):
            SectorAllocation(np.full(10, 0.1))
        with pytest.raises(DataError):
            SectorAllocation.from_percentages(ref.ALLOCATION_PCT["Index"])

    def test_matrix(self):
        m = distance_matrix({k: _alloc(k) for k in ref.ALLOCATION_PCT})
        assert m.distances.shape == (5, 5)
        assert np.array_equal(m.distances, m.distances.T)
        crisis = [i for i, l in enumerate(m.labels) if l != "Index"]
        idx = m.labels.index("Index")
        # the published columns already show the "dark square"
        assert m.distances[np.ix_(crisis, crisis)].max() < m.distances[idx, crisis].min()


class TestCrisisMatrix:
    def test_one_crisis(self, factor_panel):
        c = CrisisWindow("A", factor_panel.dates[0], factor_panel.dates[200])
        m = crisis_allocation_matrix(factor_panel, [c], SearchConfig(n_draws=500, k=10, seed=0))
        assert m.labels == ("A", "Index")
        assert m.distances.shape == (2, 2)

    def test_four_crises(self, factor_panel):
        d = factor_panel.dates
        cs = [CrisisWindow(f"C{k}", d[100 * k], d[100 * k + 99]) for k in range(4)]
        m = crisis_allocation_matrix(factor_panel, cs, SearchConfig(n_draws=300, k=10, seed=0))
        assert m.distances.shape == (5, 5)
        assert np.all(np.diag(m.distances) == 0)
        assert np.array_equal(m.distances, m.distances.T)

    def test_index_label_clash(self, factor_panel):
        c = CrisisWindow("Index", factor_panel.dates[0], factor_panel.dates[200])
        with pytest.raises(ConfigError):
            crisis_allocation_matrix(factor_panel, [c], SearchConfig(n_draws=50, k=10))

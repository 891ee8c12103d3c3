import math

import numpy as np
import pytest
import sympy
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from conftest import panel_from_returns
from crisisdyn.collectivity import (
    CorrelationMatrix,
    collectivity_series,
    correlation_distribution,
    eigen_spectrum,
    leading_collectivity,
    log_returns,
    rolling_correlation,
    standardize_block,
    standardize_window,
)
from crisisdyn.errors import DataError, DegenerateAssetError, NumericalError
from crisisdyn.market_data import PricePanel
from crisisdyn.synthetic_market import FactorModelSpec, generate


def _equicorr(n, rho):
    return np.full((n, n), rho) + (1 - rho) * np.eye(n)


def _panel(prices, sectors=None):
    import datetime as dt

    prices = np.asarray(prices, dtype=float)
    n = prices.shape[1]
    tickers = [f"X{i}" for i in range(n)]
    dates = [dt.date(2020, 1, 1) + dt.timedelta(days=k) for k in range(prices.shape[0])]
    return PricePanel(tuple(dates), tuple(tickers), prices, {t: "Energy" for t in tickers})


class TestLogReturns:
    def test_constant(self):
        r = log_returns(_panel(np.full((5, 2), 7.0)))
        assert r.returns.shape == (4, 2)
        assert np.all(r.returns == 0)

    def test_single_step(self):
        r = log_returns(_panel([[100.0], [110.0]]))
        assert r.returns[0, 0] == pytest.approx(0.0953102, abs=1e-7)
        assert r.returns[0, 0] == math.log(1.1)

    def test_doubling(self):
        r = log_returns(_panel(2.0 ** np.arange(6)[:, None]))
        np.testing.assert_allclose(r.returns, math.log(2), rtol=0, atol=1e-15)

    def test_drops_first_date(self, small_panel):
        r = log_returns(small_panel)
        assert r.dates == small_panel.dates[1:]


class TestStandardize:
    def test_hand_example(self):
        z = standardize_block(np.array([[1.0], [2.0], [3.0]]))
        np.testing.assert_allclose(z[:, 0], [-1, 0, 1], atol=1e-15)

    def test_already_standard(self):
        x = np.array([-1.0, 0.0, 1.0])[:, None]
        np.testing.assert_allclose(standardize_block(x), x, atol=1e-15)

    def test_constant_column_names_ticker(self, small_panel):
        r = log_returns(small_panel)
        bad = np.array(r.returns)
        bad[:, 2] = 0.01
        from crisisdyn.collectivity import ReturnPanel

        rp = ReturnPanel(r.dates, r.tickers, bad, r.sector_of)
        with pytest.raises(DegenerateAssetError, match=r.tickers[2]):
            standardize_window(rp, 60, 60)

    def test_window_moments(self, small_panel):
        r = log_returns(small_panel)
        z = standardize_window(r, 80, 60)
        assert z.shape == (60, small_panel.shape[1])
        np.testing.assert_allclose(z.mean(axis=0), 0, atol=1e-9)
        np.testing.assert_allclose(z.std(axis=0, ddof=1), 1, atol=1e-9)

    def test_bad_t(self, small_panel):
        r = log_returns(small_panel)
        with pytest.raises(DataError):
            standardize_window(r, 10, 60)


class TestRollingCorrelation:
    def test_identical_and_negated(self):
        rng = np.random.default_rng(0)
        x = rng.standard_normal(30)
        p = panel_from_returns(np.column_stack([x, x, -x]), ["Energy"] * 3)
        mats = rolling_correlation(log_returns(p), 10)
        assert len(mats) == 30 - 10 + 1
        for m in mats:
            assert m.values[0, 1] == pytest.approx(1, abs=1e-12)
            assert m.values[0, 2] == pytest.approx(-1, abs=1e-12)

    def test_independent_gaussians(self):
        rng = np.random.default_rng(1)
        p = panel_from_returns(0.01 * rng.standard_normal((520, 6)), ["Energy"] * 6)
        mats = rolling_correlation(log_returns(p), 500)
        for m in mats:
            off = m.values[~np.eye(6, dtype=bool)]
            assert np.all(np.abs(off) < 0.15)

    def test_matches_numpy_corrcoef(self, small_panel):
        r = log_returns(small_panel)
        mats = rolling_correlation(r, 60)
        for m in mats[::15]:
            block = r.returns[m.t - 60 : m.t]
            np.testing.assert_allclose(m.values, np.corrcoef(block, rowvar=False), atol=1e-12)

    def test_invariants(self, small_panel):
        for m in rolling_correlation(log_returns(small_panel), 60):
            v = m.values
            assert np.array_equal(v, v.T)
            assert np.max(np.abs(np.diag(v) - 1)) <= 1e-9
            assert np.linalg.eigvalsh(v).min() > -1e-8

    def test_window_too_long(self, small_panel):
        with pytest.raises(DataError):
            rolling_correlation(log_returns(small_panel), 500)


class TestEigenSpectrum:
    def test_identity(self):
        np.testing.assert_allclose(eigen_spectrum(CorrelationMatrix(0, np.eye(5))), [0.2] * 5, atol=1e-15)

    def test_rank_one(self):
        np.testing.assert_allclose(eigen_spectrum(np.ones((4, 4))), [1, 0, 0, 0], atol=1e-12)

    @pytest.mark.parametrize("rho", [0.0, 0.25, 0.5, 0.9])
    @pytest.mark.parametrize("n", [4, 10, 40])
    def test_equicorrelation(self, n, rho):
        lam = eigen_spectrum(_equicorr(n, rho))
        assert lam[0] == pytest.approx((1 + (n - 1) * rho) / n, abs=1e-9)

    def test_equicorrelation_example(self):
        assert eigen_spectrum(_equicorr(10, 0.5))[0] == pytest.approx(0.55, abs=1e-12)

    def test_psd_violation(self):
        bad = np.array([[1.0, 0.9, -0.9], [0.9, 1.0, 0.9], [-0.9, 0.9, 1.0]])
        with pytest.raises(NumericalError):
            eigen_spectrum(bad)

    def test_invalid_matrix_rejected(self):
        with pytest.raises(DataError):
            CorrelationMatrix(0, np.array([[1.0, 0.5], [0.4, 1.0]]))
        with pytest.raises(DataError):
            CorrelationMatrix(0, np.array([[2.0, 0.0], [0.0, 1.0]]))

    @given(st.integers(2, 4), st.integers(0, 10_000))
    @settings(max_examples=40, deadline=None)
    def test_charpoly_oracle(self, n, seed):
        rng = np.random.default_rng(seed)
        x = rng.standard_normal((n + 3, n))
        c = np.corrcoef(x, rowvar=False)
        c = 0.5 * (c + c.T)
        np.fill_diagonal(c, 1.0)
        lam = sympy.symbols("lam")
        poly = sympy.Matrix(c.tolist()).charpoly(lam)
        roots = sorted((complex(r).real for r in sympy.Poly(poly, lam).nroots(n=30)), reverse=True)
        expected = np.array(roots) / sum(roots)
        np.testing.assert_allclose(eigen_spectrum(c), expected, atol=1e-10)


class TestCollectivitySeries:
    def test_normalization_and_bounds(self, small_panel):
        s = collectivity_series(log_returns(small_panel), 60)
        n = small_panel.shape[1]
        assert s.spectra.shape == (120 - 60 + 1, n)
        np.testing.assert_allclose(s.spectra.sum(axis=1), 1, atol=1e-9)
        assert np.all(np.diff(s.spectra, axis=1) <= 0)
        assert np.all(s.spectra >= 0)
        assert np.all((s.leading >= 1 / n) & (s.leading <= 1))
        assert s.timestamps[0] == 60 and s.timestamps[-1] == 120

    def test_threads_do_not_change_result(self, small_panel):
        r = log_returns(small_panel)
        a = collectivity_series(r, 30, threads=1)
        b = collectivity_series(r, 30, threads=4)
        assert np.array_equal(a.spectra, b.spectra)

    def test_fast_path_matches_reference(self, small_panel):
        r = log_returns(small_panel)
        s = collectivity_series(r, 60)
        np.testing.assert_allclose(leading_collectivity(r.returns, 60), s.leading, atol=1e-12)

    def test_fast_path_degenerate(self):
        x = np.random.default_rng(0).standard_normal((80, 3))
        x[:, 1] = 0.003
        with pytest.raises(DegenerateAssetError):
            leading_collectivity(x, 60, ["a", "b", "c"])

    def test_monotone_in_factor_loading(self):
        leads = []
        for beta in (0.0, 0.3, 0.6, 1.0, 2.0):
            spec = FactorModelSpec(n_sectors=2, stocks_per_sector=5, T=400, market_beta=beta, seed=3)
            r = log_returns(generate(spec))
            leads.append(collectivity_series(r, 60).leading.mean())
        assert all(a < b for a, b in zip(leads, leads[1:]))


class TestCorrelationDistribution:
    def test_two_assets(self, small_panel):
        d = correlation_distribution(small_panel.columns([0, 1]))
        assert len(d) == 1

    def test_sample_size(self, small_panel):
        n = small_panel.shape[1]
        assert len(correlation_distribution(small_panel)) == n * (n - 1) // 2

    def test_size_for_503(self):
        assert 503 * 502 // 2 == 126_253

    def test_comonotone(self):
        x = np.random.default_rng(2).standard_normal((30, 1))
        p = panel_from_returns(np.tile(x, (1, 5)), ["Energy"] * 5)
        d = correlation_distribution(p)
        np.testing.assert_allclose(d.sample, 1.0, atol=1e-12)

    def test_sorted_and_matches_corrcoef(self, small_panel):
        d = correlation_distribution(small_panel)
        assert np.all(np.diff(d.sample) >= 0)
        c = np.corrcoef(np.diff(np.log(small_panel.prices), axis=0), rowvar=False)
        np.testing.assert_allclose(d.sample, np.sort(c[np.triu_indices_from(c, 1)]), atol=1e-12)

    def test_too_short(self, small_panel):
        import datetime as dt

        from crisisdyn.market_data import CrisisWindow

        w = CrisisWindow("w", small_panel.dates[0], small_panel.dates[1])
        with pytest.raises(DataError, match="at least 3 dates"):
            correlation_distribution(small_panel, w)


@given(arrays(np.float64, (70, 3), elements=st.floats(-0.1, 0.1, allow_subnormal=False)))
@settings(max_examples=60, deadline=None)
def test_spectrum_properties_fuzz(x):
    try:
        lead = leading_collectivity(x, 60)
    except DegenerateAssetError:
        return
    assert np.all(lead >= 1 / 3 - 1e-12) and np.all(lead <= 1 + 1e-12)

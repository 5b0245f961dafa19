import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from enroll_opt.errors import DomainError
from enroll_opt.pgdist import (
    DiscreteDist,
    PGParams,
    RatePrior,
    pg_cdf,
    pg_pmf,
    pg_pmf_vector,
    pg_quantile,
    pg_sf,
    pg_truncated,
)

from _oracles import nb_pmf_list, nb_pmf_product

shapes = st.floats(0.2, 20.0)
rates = st.floats(0.5, 500.0)
exposures = st.floats(0.0, 1000.0)


class TestRatePrior:
    def test_moments(self):
        p = RatePrior(4.0, 2.0)
        assert p.mean() == 2.0
        assert p.variance() == 1.0
        assert p.cv() == pytest.approx(0.5)

    def test_from_mean_cv(self):
        p = RatePrior.from_mean_cv(0.02, 1.2)
        assert p.alpha == pytest.approx(1 / 1.44)
        assert p.mean() == pytest.approx(0.02)
        assert p.cv() == pytest.approx(1.2)

    @pytest.mark.parametrize("a,b", [(0, 1), (-1, 1), (1, 0), (math.inf, 1), (math.nan, 1)])
    def test_rejects_bad(self, a, b):
        with pytest.raises(DomainError):
            RatePrior(a, b)


class TestPmf:
    def test_geometric_zero(self):
        assert pg_pmf(PGParams(1, 1, 1), 0) == pytest.approx(0.5, abs=1e-15)

    def test_appendix_zero_term(self):
        assert pg_pmf(PGParams(300, 1.5, 150), 0) == pytest.approx((1 / 3) ** 1.5, rel=1e-13)
        assert pg_pmf(PGParams(300, 1.5, 150), 0) == pytest.approx(0.192450, abs=5e-7)

    def test_zero_exposure_point_mass(self):
        assert pg_pmf(PGParams(0, 2.7, 10), 0) == 1.0
        assert pg_pmf(PGParams(0, 2.7, 10), 1) == 0.0
        assert pg_cdf(PGParams(0, 2.7, 10), 0) == 1.0

    @pytest.mark.parametrize("alpha", [0.3, 1.0, 1.5, 4.0, 250.0])
    @pytest.mark.parametrize("beta,t", [(10, 1), (150, 30), (150, 300), (2, 700)])
    def test_matches_product_oracle(self, alpha, beta, t):
        ours = pg_pmf_vector(PGParams(t, alpha, beta), 60)
        ref = np.array(nb_pmf_list(alpha, beta, t, 60))
        assert np.allclose(ours, ref, rtol=1e-11, atol=1e-14)

    @given(shapes, rates, exposures, st.integers(0, 200))
    @settings(max_examples=200, deadline=None)
    def test_nb_identity(self, a, b, t, k):
        ours = pg_pmf(PGParams(t, a, b), k)
        assert ours == pytest.approx(nb_pmf_product(k, a, b, t), rel=1e-11, abs=1e-300)

    @pytest.mark.parametrize("a,b,t", [(0.5, 10, 5), (1.5, 150, 300), (7, 3, 40)])
    def test_matches_scipy_nbinom(self, a, b, t):
        k = np.arange(80)
        assert np.allclose(pg_pmf(PGParams(t, a, b), k), stats.nbinom.pmf(k, a, b / (b + t)), rtol=1e-10, atol=0)

    def test_large_shape_does_not_underflow(self):
        # shape in the hundreds, as for aggregated countries
        p = PGParams(1.0, 800.0, 4.0)
        v = pg_pmf_vector(p, 600)
        assert np.all(np.isfinite(v))
        assert v.sum() == pytest.approx(1.0, abs=1e-9)
        assert (v * np.arange(601)).sum() == pytest.approx(200.0, rel=1e-9)


class TestCdf:
    def test_geometric(self):
        assert pg_cdf(PGParams(1, 1, 1), 1) == pytest.approx(0.75, abs=1e-15)

    @given(shapes, rates, exposures)
    def test_negative_argument_is_zero(self, a, b, t):
        assert pg_cdf(PGParams(t, a, b), -1) == 0.0
        assert pg_cdf(PGParams(t, a, b), -7) == 0.0

    def test_appendix_truncation_adequate(self):
        assert pg_cdf(PGParams(300, 1.5, 150), 50) == pytest.approx(1.0, abs=1e-4)

    @given(shapes, rates, st.floats(0.01, 1000.0), st.integers(0, 150))
    @settings(max_examples=150, deadline=None)
    def test_partial_sums(self, a, b, t, K):
        p = PGParams(t, a, b)
        s = math.fsum(pg_pmf_vector(p, K))
        assert pg_cdf(p, K) == pytest.approx(s, abs=1e-12)
        assert pg_cdf(p, K) + pg_sf(p, K) == pytest.approx(1.0, abs=1e-14)

    @given(shapes, rates, st.floats(0.01, 1000.0))
    @settings(max_examples=100, deadline=None)
    def test_monotone_to_one(self, a, b, t):
        p = PGParams(t, a, b)
        c = np.array([pg_cdf(p, k) for k in range(-2, 200)])
        assert np.all(np.diff(c) >= -1e-15)
        assert pg_cdf(p, 10**7) == pytest.approx(1.0, abs=1e-12)

    @pytest.mark.parametrize("a,b,t", [(0.3, 10, 1), (1.5, 150, 300), (4, 10, 30), (20, 2, 100)])
    def test_mean_identity(self, a, b, t):
        p = PGParams(t, a, b)
        K = pg_quantile(p, 1 - 1e-12)
        v = pg_pmf_vector(p, K)
        assert math.fsum(np.arange(K + 1) * v) == pytest.approx(a * t / b, rel=1e-9)


class TestQuantile:
    def test_geometric(self):
        assert pg_quantile(PGParams(1, 1, 1), 0.5) == 0
        assert pg_quantile(PGParams(1, 1, 1), 0.75) == 1

    def test_appendix_95(self):
        p = PGParams(300, 1.5, 150)
        # frozen from a scan of the product-form oracle
        cum = np.cumsum(nb_pmf_list(1.5, 150, 300, 40))
        assert int(np.argmax(cum >= 0.95)) == 9
        assert pg_quantile(p, 0.95) == 9

    @pytest.mark.parametrize("q", [0.0, 1.0, -0.1, 1.5, math.nan])
    def test_domain(self, q):
        with pytest.raises(DomainError):
            pg_quantile(PGParams(1, 1, 1), q)

    @given(shapes, rates, st.floats(0.01, 1000.0), st.integers(0, 100))
    @settings(max_examples=150, deadline=None)
    def test_quantile_inverts_cdf(self, a, b, t, k):
        p = PGParams(t, a, b)
        c = pg_cdf(p, k)
        if c + 1e-9 < 1:
            assert pg_quantile(p, c + 1e-9) >= k
        q = pg_quantile(p, 0.37)
        assert pg_cdf(p, q) >= 0.37
        assert q == 0 or pg_cdf(p, q - 1) < 0.37


class TestDiscreteDist:
    def test_point_mass(self):
        d = DiscreteDist.point_mass(3)
        assert d.mean() == 3 and d.var() == 0
        assert d.cdf(2) == 0 and d.cdf(3) == 1
        assert d.quantile(0.5) == 3

    def test_truncated_sums_to_one(self):
        d = pg_truncated(PGParams(300, 1.5, 150), 1e-9)
        assert d.total() == pytest.approx(1.0, abs=1e-15)
        assert d.sf(d.support_max - 1) < 1e-8
        assert d.mean() == pytest.approx(3.0, rel=1e-7)

    def test_rejects_negative(self):
        with pytest.raises(DomainError):
            DiscreteDist(np.array([0.5, -0.1, 0.6]))


def test_product_oracle_sanity():
    assert nb_pmf_product(0, 1, 1, 1) == 0.5
    assert math.fsum(nb_pmf_list(2.0, 5.0, 3.0, 400)) == pytest.approx(1.0, abs=1e-12)

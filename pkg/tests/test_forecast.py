import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from enroll_opt import forecast as fc
from enroll_opt.capped import capped_country_dist, time_to_cap_cdf
from enroll_opt.errors import DomainError, UnreachableTargetError
from enroll_opt.model import StudyPlan, country_count_dist, country_rate_moments, time_to_target_cdf
from enroll_opt.pgdist import DiscreteDist, RatePrior

from _oracles import enumerate_capped_sum
from conftest import grid_plan, make_country


def rand_dist(rng, n):
    p = rng.random(n)
    return DiscreteDist(p / p.sum())


class TestConvolve:
    def test_identity(self):
        x = rand_dist(np.random.default_rng(0), 30)
        y = fc.convolve(x, DiscreteDist.point_mass(0))
        assert np.allclose(y.pmf, x.pmf, atol=1e-15)

    def test_point_masses(self):
        y = fc.convolve(DiscreteDist.point_mass(2), DiscreteDist.point_mass(3))
        assert y.support_max == 5 and y.pmf[5] == pytest.approx(1.0)

    @pytest.mark.parametrize("n,m", [(10, 20), (65, 70), (300, 500)])
    def test_fft_matches_direct(self, n, m):
        rng = np.random.default_rng(n)
        a, b = rand_dist(rng, n), rand_dist(rng, m)
        y = fc.convolve(a, b)
        assert len(y) == n + m - 1
        assert np.max(np.abs(y.pmf - np.convolve(a.pmf, b.pmf))) < 1e-10
        assert np.all(y.pmf >= 0) and y.total() == pytest.approx(1.0, abs=1e-9)

    def test_country_vectors(self):
        a = country_count_dist(make_country("a", [0, 10, 20]), 400)
        b = country_count_dist(make_country("b", [5, 50]), 400)
        assert np.max(np.abs(fc.convolve(a, b).pmf - np.convolve(a.pmf, b.pmf))) < 1e-10


class TestGlobalDist:
    def test_inactive(self):
        plan = StudyPlan((make_country("a", [50]), make_country("b", [60])), 5, 100)
        d = fc.global_dist(plan, 40)
        assert d.support_max == 0

    def test_single_uncapped(self):
        c = make_country("a", [0, 20])
        d = fc.global_dist(StudyPlan((c,), 5, 100), 300)
        assert np.allclose(d.pmf, country_count_dist(c, 300).pmf, atol=1e-15)

    def test_small_caps_enumeration(self):
        cs = [make_country(f"c{j}", [0, 15 * j], cap=L) for j, L in enumerate((3, 5, 4))]
        plan = StudyPlan(tuple(cs), 5, 300)
        d = fc.global_dist(plan, 300)
        ref = enumerate_capped_sum([capped_country_dist(c, 300).pmf.tolist() for c in cs])
        assert d.support_max == 12
        for k, p in ref.items():
            assert d.pmf[k] == pytest.approx(p, abs=1e-12)

    def test_mean_is_sum_of_country_means(self):
        plan = grid_plan(5, 4, caps=[None, 4, None, 9, 2])
        for t in (30, 120, 400):
            d = fc.global_dist(plan, t)
            mean, _ = fc.global_mean_var(plan, t)
            assert d.mean() == pytest.approx(mean, rel=1e-8)


class TestPos:
    def test_zero_time(self):
        plan = grid_plan(3, 2)
        assert fc.pos(plan, 0) == 0.0
        assert fc.pos(plan, 0, "normal") == 0.0

    def test_one_patient(self):
        plan = StudyPlan((make_country("a", [0]),), 1, 10)
        assert fc.pos(plan, 5) > 0

    def test_unknown_method(self):
        with pytest.raises(DomainError):
            fc.pos(grid_plan(1, 1), 10, "exact")

    def test_normal_close_on_fifteen_countries(self):
        plan = grid_plan(15, 4, target=60, t_plan=200)
        assert abs(fc.pos(plan, 200) - fc.pos(plan, 200, "normal")) < 0.02

    @pytest.mark.parametrize("caps", [[None] * 4, [3, None, 8, 40], [2, 2, 2, 2]])
    @pytest.mark.parametrize("t", [20, 90, 300])
    def test_truncated_route_matches_full_pmf(self, caps, t):
        plan = grid_plan(4, 3, caps=caps, target=7)
        assert fc.pos(plan, t) == pytest.approx(fc.global_dist(plan, t).sf(6), abs=1e-12)

    def test_truncated_route_long_vectors(self):
        plan = grid_plan(12, 6, prior=RatePrior(2.0, 40.0), target=400, t_plan=300)
        assert fc.pos(plan, 300) == pytest.approx(fc.global_dist(plan, 300).sf(399), abs=1e-10)

    def test_normal_zero_variance_is_deterministic(self):
        assert fc.pos_from_moments([], [], 1, "normal") == 0.0

    @given(st.lists(st.integers(0, 20), min_size=2, max_size=4), st.integers(0, 3), st.integers(1, 15), st.integers(10, 40))
    @settings(max_examples=25, deadline=None)
    def test_cap_monotone(self, caps, j, bump, n):
        cs = [make_country(f"c{i}", [0, 10 * i]) for i in range(len(caps))]
        plan = StudyPlan(tuple(c.with_cap(L) for c, L in zip(cs, caps)), n, 400)
        j %= len(caps)
        raised = plan.replace_caps([L + bump if i == j else L for i, L in enumerate(caps)])
        free = plan.replace_caps([None] * len(caps))
        for t in (50, 200, 400, 900):
            p0, p1, pf = fc.pos(plan, t), fc.pos(raised, t), fc.pos(free, t)
            assert p1 >= p0 - 1e-12
            assert pf >= p1 - 1e-12


class TestCompletion:
    def test_unreachable(self):
        plan = StudyPlan((make_country("a", [0], cap=3), make_country("b", [0], cap=4)), 8, 100)
        with pytest.raises(UnreachableTargetError):
            fc.completion_time_quantile(plan, 0.5)

    def test_median_near_mean_crossing(self):
        plan = grid_plan(20, 6, prior=RatePrior(30.0, 3000.0), target=400, t_plan=300)
        t50 = fc.completion_time_quantile(plan, 0.5, "normal")
        cross = next(t for t in range(1, 5000) if fc.global_mean_var(plan, t)[0] >= 400)
        assert abs(t50 - cross) <= 1

    def test_single_country_matches_scan(self):
        c = make_country("a", [0, 30, 60])
        plan = StudyPlan((c,), 4, 100)
        t = fc.completion_time_quantile(plan, 0.9)
        scan = next(d for d in range(0, 10000) if time_to_target_cdf(c, 4, d) >= 0.9)
        assert t == scan

    def test_bad_level(self):
        with pytest.raises(DomainError):
            fc.completion_time_quantile(grid_plan(1, 1), 1.0)


class TestSeries:
    plan = grid_plan(4, 3, caps=[6, None, 9, None], target=20, t_plan=200)

    def test_invariants(self):
        s = fc.forecast_series(self.plan, 0.9)
        assert np.all(s.lo <= s.median) and np.all(s.median <= s.hi)
        assert np.all(np.diff(s.mean) >= -1e-12)
        assert np.all(np.diff(s.pos_by_day) >= -1e-12)
        assert s.days[-1] == fc.completion_time_quantile(self.plan, 0.95)

    def test_band_is_five_ninety_five(self):
        s = fc.forecast_series(self.plan, 0.9, horizon=120)
        d = fc.global_dist(self.plan, 120)
        assert (s.lo[-1], s.median[-1], s.hi[-1]) == (d.quantile(0.05), d.quantile(0.5), d.quantile(0.95))

    def test_uncapped_mean_exact(self):
        plan = grid_plan(3, 2, target=10)
        s = fc.forecast_series(plan, horizon=50)
        ref = [sum(country_rate_moments(c, t).E for c in plan.countries) for t in s.days]
        assert np.allclose(s.mean, ref, rtol=1e-13)

    def test_normal_series(self):
        s = fc.forecast_series(self.plan, 0.9, "normal", horizon=100)
        assert np.all(s.lo <= s.median) and np.all(s.median <= s.hi)
        assert np.all(np.diff(s.pos_by_day) >= -1e-12)

    def test_capped_mean_plateaus(self):
        plan = grid_plan(3, 10, caps=[5, 7, 11], target=10)
        mean, _ = fc.global_mean_var(plan, 1e4)
        assert mean == pytest.approx(23, abs=1e-6)

    def test_q_level_domain(self):
        with pytest.raises(DomainError):
            fc.forecast_series(self.plan, 0.4)


class TestSummary:
    def test_completion_summary(self):
        plan = grid_plan(4, 3, target=15, t_plan=200)
        s = fc.completion_summary(plan, 0.9)
        assert s.lo_day <= s.mean_day <= s.hi_day
        assert s.pos_t_plan == pytest.approx(fc.pos(plan, 200))


class TestCapImpact:
    def test_no_caps(self):
        with pytest.raises(DomainError, match="no capped countries"):
            fc.cap_impact_report(grid_plan(2, 2))

    def test_loose_cap_not_flagged(self):
        plan = grid_plan(3, 3, caps=[1000, None, None], target=15)
        rep = fc.cap_impact_report(plan)
        assert rep.flagged_ids == []
        assert rep.countries[0].prob_cap_by_t_plan < 1e-12

    def test_tight_cap_flagged(self):
        plan = grid_plan(3, 3, caps=[1, None, None], target=15)
        assert fc.cap_impact_report(plan).flagged_ids == ["c0"]

    def test_tightening_lowers_pos(self):
        loose = grid_plan(4, 3, caps=[10, 10, 10, 10], target=20)
        tight = loose.replace_caps([4, 4, 4, 4])
        assert fc.cap_impact_report(tight).pos_t_plan <= fc.cap_impact_report(loose).pos_t_plan

    def test_unreachable_reports_none(self):
        plan = grid_plan(2, 3, caps=[2, 2], target=10)
        rep = fc.cap_impact_report(plan)
        assert rep.completion_quantile is None
        assert rep.flagged_ids == ["c0", "c1"]

    def test_cap_quantile_matches_cdf(self):
        c = make_country("a", [0, 10], cap=5)
        q = fc.cap_time_quantile(c, 0.9)
        assert time_to_cap_cdf(c, q) >= 0.9 > time_to_cap_cdf(c, q - 1)

import numpy as np
import pytest

from enroll_opt.capped import capped_mean, capped_second_moment
from enroll_opt.errors import DomainError
from enroll_opt.model import StudyPlan
from enroll_opt.oracle import SimConfig, brute_capped_moments, simulate
from enroll_opt.pgdist import PGParams, RatePrior

from conftest import grid_plan, make_country


def _same(a, b):
    return (
        np.array_equal(a.day_hist, b.day_hist)
        and np.array_equal(a.completion_hist, b.completion_hist)
        and np.array_equal(a.cap_hit_hist, b.cap_hit_hist)
        and np.array_equal(a.country_hist, b.country_hist)
    )


PLAN = grid_plan(3, 3, caps=[4, None, 6], target=10, t_plan=150)


class TestReproducibility:
    def test_same_seed_same_summary(self):
        cfg = SimConfig(replications=3000, seed=9, chunk_size=1000)
        assert _same(simulate(PLAN, cfg), simulate(PLAN, cfg))

    def test_other_seed_differs(self):
        a = simulate(PLAN, SimConfig(replications=2000, seed=1))
        b = simulate(PLAN, SimConfig(replications=2000, seed=2))
        assert not np.array_equal(a.day_hist, b.day_hist)

    @pytest.mark.parametrize("threads", ["1", "4"])
    def test_worker_count_is_invisible(self, monkeypatch, threads):
        cfg = SimConfig(replications=4000, seed=3, chunk_size=500)
        monkeypatch.setenv("ENROLL_OPT_THREADS", "1")
        ref = simulate(PLAN, cfg)
        monkeypatch.setenv("ENROLL_OPT_THREADS", threads)
        assert _same(ref, simulate(PLAN, cfg))

    def test_chunks_pool(self):
        s = simulate(PLAN, SimConfig(replications=2500, seed=0, chunk_size=1000))
        assert s.day_hist.sum(axis=1).tolist() == [2500] * s.horizon
        assert s.completion_hist.sum() == 2500


class TestSemantics:
    def test_cap_zero_contributes_nothing(self):
        plan = StudyPlan((make_country("shut", [0, 0], cap=0), make_country("open", [0])), 1, 50)
        s = simulate(plan, SimConfig(replications=500))
        assert s.country_pmf("shut")[0] == 1.0
        assert s.cap_hit_prob("shut", 0) == (1.0, 0.0)

    def test_caps_never_exceeded(self):
        s = simulate(PLAN, SimConfig(replications=2000))
        assert s.country_hist[0, 5:].sum() == 0 and s.country_hist[2, 7:].sum() == 0

    def test_degenerate_prior_is_poisson(self):
        m = 0.2
        plan = StudyPlan((make_country("a", [0], prior=RatePrior(1e6, 1e6 / m)),), 1, 100)
        s = simulate(plan, SimConfig(replications=20000, seed=4))
        var = s.var_by_day()
        for d in (10, 50, 100):
            # Poisson variance m*d; relative SE of a sample variance ~ sqrt(2/reps)
            assert var[d - 1] == pytest.approx(m * d, rel=0.05)

    def test_one_site_mean(self):
        prior = RatePrior(1.5, 150.0)
        plan = StudyPlan((make_country("a", [0], prior=prior),), 1, 300)
        s = simulate(plan, SimConfig(replications=20000, seed=5))
        mean, se = s.mean_by_day(), s.mean_se_by_day()
        for t in (50, 150, 300):
            assert abs(mean[t - 1] - prior.alpha * t / prior.beta) < 3 * se[t - 1]

    def test_activation_is_strict(self):
        plan = StudyPlan((make_country("a", [10], prior=RatePrior(1e3, 1e2)),), 1, 20)
        s = simulate(plan, SimConfig(replications=200))
        assert s.mean_by_day()[9] == 0.0 and s.mean_by_day()[10] > 0

    def test_accessors(self):
        s = simulate(PLAN, SimConfig(replications=1000, horizon=400))
        p, se = s.pos()
        assert 0 <= p <= 1 and se >= 0
        assert s.cdf(150, -1) == (0.0, 0.0)
        pos, _ = s.pos_by_day()
        assert np.all(np.diff(pos) >= 0)
        rows = s.rows()
        assert len(rows) == 400 and all(r["q05"] <= r["median"] <= r["q95"] for r in rows)
        assert s.completion_quantile(0.5) is not None
        with pytest.raises(DomainError):
            s.cap_hit_prob("c1", 10)
        with pytest.raises(DomainError):
            s.pos(401)

    def test_single_replication(self):
        s = simulate(PLAN, SimConfig(replications=1))
        assert s.day_hist.sum() == s.horizon

    def test_invalid_config(self):
        with pytest.raises(DomainError):
            SimConfig(replications=0)
        with pytest.raises(DomainError):
            SimConfig(horizon=0)


class TestBruteMoments:
    params = PGParams(300.0, 1.5, 150.0)

    def test_zero_cap(self):
        assert brute_capped_moments(self.params, 0) == (0.0, 0.0)

    def test_huge_cap(self):
        m = self.params.mean()
        mean, second = brute_capped_moments(self.params, 2000)
        assert mean == pytest.approx(m, abs=1e-9)
        assert second == pytest.approx(m + m * m + 1.5 * 300**2 / 150**2, abs=1e-9)

    def test_matches_closed_forms(self):
        mean, second = brute_capped_moments(self.params, 5)
        assert mean == pytest.approx(capped_mean(self.params, 5), abs=1e-10)
        assert second == pytest.approx(capped_second_moment(self.params, 5), abs=1e-10)

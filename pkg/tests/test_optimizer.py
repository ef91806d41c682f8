import math

import numpy as np
import pytest

from agesampling.optimizer import (EPS_EXACT, EPS_MC, SolveConfig, bisect_constrained, bisect_unconstrained,
                                   cycle_stats, dinkelbach_gap, level_for_interval, make_engine,
                                   randomization_probability, solve, zero_wait_check, zero_wait_optimal)
from agesampling.penalty import Exponential, Linear, NegMutualInfoGauss, Power, Step
from agesampling.policy import water_level
from agesampling.service import (Constant, DiscretizedLogNormal, ExpectationEngine, ExponentialService,
                                 Geometric, TwoPoint)

DISC = SolveConfig(mode="discrete")


class TestCycleStats:
    def test_constant_service(self):
        st = cycle_stats(1.5, Linear(), Constant(1.0))
        np.testing.assert_allclose(st.mean_penalty, 1.5)
        np.testing.assert_allclose(st.mean_length, 1.0)
        assert st.water_level <= 1.0

    def test_discrete_two_point(self):
        st = cycle_stats(11 / 6, Linear(), TwoPoint(1, 2), "discrete")
        np.testing.assert_allclose(st.mean_penalty, 11 / 4, rtol=1e-15)
        np.testing.assert_allclose(st.mean_length, 1.5, rtol=1e-15)
        assert st.se == 0.0

    def test_interval_variants(self):
        ev = ExpectationEngine(Step(2.0), Constant(1.0))
        st = cycle_stats(0.0, ev=ev, need_max=True)
        np.testing.assert_allclose(st.interval_min, 1.0)
        np.testing.assert_allclose(st.interval_max, 1.0, atol=1e-9)
        assert math.isfinite(st.ratio)

    def test_rejects_infinite_threshold(self):
        with pytest.raises(ValueError):
            cycle_stats(math.inf, Linear(), Constant(1.0))


class TestUnconstrained:
    def test_constant_service(self):
        res = bisect_unconstrained(Linear(), Constant(1.0))
        assert abs(res.beta - 1.5) <= EPS_EXACT
        assert res.alpha == 0.0 and res.p_opt == res.beta

    def test_discrete_two_point(self):
        res = bisect_unconstrained(Linear(), TwoPoint(1, 2), DISC)
        assert abs(res.beta - 11 / 6) <= EPS_EXACT

    def test_exponential_service_beats_zero_wait(self):
        res = bisect_unconstrained(Linear(), ExponentialService(1.0))
        assert res.beta < 2.0
        assert res.policy.water_level > 0.0

    @pytest.mark.parametrize("p,dist,mode", [
        (Linear(), ExponentialService(1.0), "continuous"),
        (Power(2.0), TwoPoint(0.5, 3.0, 0.3), "continuous"),
        (Exponential(0.3), Geometric(0.4), "discrete"),
        (NegMutualInfoGauss(0.7), TwoPoint(1, 9), "discrete"),
    ])
    def test_root_self_consistency(self, p, dist, mode):
        cfg = SolveConfig(mode=mode)
        ev = make_engine(p, dist, cfg)
        res = bisect_unconstrained(p, dist, cfg, ev)
        ratio = cycle_stats(res.beta, ev=ev).ratio
        assert abs(ratio - res.beta) <= 2 * cfg.tolerance(ev) + 1e-12

    def test_objective_monotone_on_pool(self):
        ev = ExpectationEngine(Linear(), ExponentialService(1.0), n_mc=20_000, seed=2)
        betas = np.linspace(1.0, 3.0, 60)
        o = [b - cycle_stats(b, ev=ev).ratio for b in betas]
        assert np.all(np.diff(o) >= -1e-12)

    def test_default_tolerances(self):
        assert DISC.tolerance(ExpectationEngine(Linear(), TwoPoint(1, 2), "discrete")) == EPS_EXACT
        assert SolveConfig().tolerance(ExpectationEngine(Linear(), ExponentialService(1.0), n_mc=10)) == EPS_MC

    def test_constant_zero_penalty(self):
        res = bisect_unconstrained(Exponential(0.0), TwoPoint(1, 4), DISC)
        assert abs(res.beta) <= EPS_EXACT
        assert res.policy.water_level == 0.0


class TestRandomization:
    def test_midpoint(self):
        assert randomization_probability(2.0, 4.0, 3.0) == 0.5

    def test_boundaries(self):
        assert randomization_probability(3.0, 4.0, 3.0) == 1.0
        assert randomization_probability(2.0, 4.0, 4.0) == 0.0
        assert randomization_probability(3.0, 3.0, 3.0) == 1.0

    def test_level_for_interval(self):
        ev = ExpectationEngine(Linear(), TwoPoint(1, 2), "discrete")
        assert level_for_interval(ev, 3.0) == 3.0
        assert level_for_interval(ev, 1.2) == 0.0


class TestConstrained:
    def test_two_point_discrete(self):
        res = solve(Linear(), TwoPoint(1, 2), SolveConfig(f_max=1 / 3, mode="discrete"))
        assert res.constrained_active
        assert abs(res.expected_interval - 3.0) <= 1e-6
        assert 0.0 <= res.lam <= 1.0

    def test_constant_service(self):
        cfg = SolveConfig(f_max=0.25)
        res = solve(Linear(), Constant(1.0), cfg)
        assert res.constrained_active
        assert abs(res.expected_interval - 4.0) <= 2 * EPS_EXACT
        # the constrained optimum waits until the age reaches 4, averaging 3
        np.testing.assert_allclose(res.p_opt, 3.0, atol=1e-8)
        assert res.alpha >= 0.0

    def test_saturating_penalty(self):
        # p saturates at 1: every wait beyond the saturation point is optimal
        res = solve(Step(1.5), TwoPoint(1, 3), SolveConfig(f_max=0.2, mode="discrete"))
        assert res.constrained_active
        np.testing.assert_allclose(res.expected_interval, 5.0, atol=1e-9)
        assert math.isfinite(res.policy.water_level_max)

    def test_sandwich_at_relaxed_thresholds(self):
        p, dist = NegMutualInfoGauss(0.9), TwoPoint(1, 21)
        cfg = SolveConfig(f_max=0.06, mode="discrete")
        ev = make_engine(p, dist, cfg)
        res = solve(p, dist, cfg, ev)
        target = 1 / cfg.f_max
        pol = res.policy
        lo = ev.mean(ev.y + pol.z_min(ev.y))
        hi = ev.mean(ev.y + pol.z_max(ev.y))
        assert lo <= target + 1e-12 and target <= hi + 1e-12
        assert water_level(ev, pol.beta_low) == pol.water_level

    def test_direct_call_runs_unconstrained_first(self):
        res = bisect_constrained(Linear(), Constant(1.0), SolveConfig(f_max=0.5))
        np.testing.assert_allclose(res.expected_interval, 2.0, atol=1e-9)


class TestSolveBranches:
    def test_no_rate_limit_is_case_one(self):
        assert not solve(Linear(), ExponentialService(1.0), SolveConfig(n_mc=5000)).constrained_active

    def test_loose_limit_is_case_one(self):
        res = solve(Linear(), Constant(1.0), SolveConfig(f_max=10.0))
        assert not res.constrained_active

    def test_to_dict_fields(self):
        d = solve(Linear(), Constant(1.0)).to_dict()
        for key in ("beta", "alpha", "lambda", "p_opt", "expected_interval", "iterations", "residual", "seed"):
            assert key in d

    def test_config_validation(self):
        with pytest.raises(ValueError):
            SolveConfig(f_max=0.0)
        with pytest.raises(ValueError):
            SolveConfig(eps=-1.0)


class TestZeroWait:
    def test_constant_service_any_penalty(self):
        for p in (Linear(), Exponential(0.5), Power(3.0)):
            assert zero_wait_optimal(p, Constant(2.0))

    def test_exponential_service(self):
        assert not zero_wait_optimal(Linear(), ExponentialService(1.0))

    def test_discrete_two_point(self):
        chk = zero_wait_check(Linear(), TwoPoint(1, 2), "discrete")
        assert chk.optimal
        np.testing.assert_allclose(chk.lhs, 2.5)
        np.testing.assert_allclose(chk.rhs, 11 / 6)

    def test_agrees_with_solver(self):
        for dist in (TwoPoint(1, 5), TwoPoint(1, 2, 0.9), Geometric(0.6), DiscretizedLogNormal(0.5)):
            for p in (Linear(), Exponential(0.4)):
                cfg = SolveConfig(mode="discrete", n_mc=20_000)
                res = solve(p, dist, cfg)
                waits = res.policy.water_level > dist.ess_inf
                assert zero_wait_optimal(p, dist, "discrete", make_engine(p, dist, cfg)) == (not waits)


class TestDinkelbach:
    def test_signs(self):
        assert abs(dinkelbach_gap(1.5, Linear(), Constant(1.0))) <= 1e-9
        assert dinkelbach_gap(1.0, Linear(), Constant(1.0)) > 0
        assert dinkelbach_gap(2.0, Linear(), Constant(1.0)) < 0

    def test_root_matches_bisection(self):
        ev = ExpectationEngine(Power(2.0), TwoPoint(1, 6), "discrete")
        beta = bisect_unconstrained(Power(2.0), TwoPoint(1, 6), DISC, ev).beta
        assert abs(dinkelbach_gap(beta, ev=ev)) <= 1e-6

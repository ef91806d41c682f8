import math

import numpy as np
import pytest

from agesampling.errors import ConfigError
from agesampling.penalty import Linear, NegMutualInfoGauss, Step
from agesampling.policy import (ThresholdPolicy, Uniform, ZeroWait, first_crossing, next_sample_time,
                                policy_from_dict, threshold_policy, uniform_for_rate, waiting_time,
                                water_level, z_age_threshold, z_inf_form, z_water_filling)
from agesampling.service import Constant, ExpectationEngine, ExponentialService, TwoPoint


class TestWaterLevel:
    def test_linear_constant_service(self):
        # f(s) = s + 1, so the water level of beta is beta - 1
        ev = ExpectationEngine(Linear(), Constant(1.0))
        np.testing.assert_allclose(water_level(ev, 2.5), 1.5, atol=1e-9)
        assert water_level(ev, 0.5) == 0.0

    def test_discrete_is_integer(self):
        ev = ExpectationEngine(Linear(), TwoPoint(1, 2), "discrete")
        # f(s) = s + 1.5
        assert water_level(ev, 4.0) == 3.0
        assert water_level(ev, 4.5) == 3.0
        assert water_level(ev, 4.5, strict=True) == 4.0

    def test_strict_level_on_plateau(self):
        # f(s) = P(s + 1 > 2) is 0 up to 1, then 1: the >= and > levels differ
        ev = ExpectationEngine(Step(2.0), Constant(1.0))
        w_min = water_level(ev, 0.0)
        w_max = water_level(ev, 0.0, strict=True)
        assert w_min == 0.0
        np.testing.assert_allclose(w_max, 1.0, atol=1e-9)

    def test_predicate_holds_at_returned_level(self):
        ev = ExpectationEngine(NegMutualInfoGauss(0.8), TwoPoint(1, 5), "discrete")
        w = first_crossing(ev, -0.1)
        assert ev.post_service(w) >= -0.1
        assert ev.post_service(w - 1.0) < -0.1


class TestPolicyForms:
    def test_three_forms_agree_discrete(self):
        ev = ExpectationEngine(NegMutualInfoGauss(0.8), TwoPoint(1, 5), "discrete")
        rng = np.random.default_rng(3)
        y = rng.integers(1, 12, 300).astype(float)
        beta = rng.uniform(-0.6, -0.005, 300)
        direct = z_inf_form(ev, y, beta)
        w = np.array([water_level(ev, b) for b in beta])
        np.testing.assert_array_equal(direct, z_water_filling(y, w))
        np.testing.assert_array_equal(direct, z_age_threshold(y, w))

    def test_three_forms_agree_continuous(self):
        ev = ExpectationEngine(Linear(), ExponentialService(1.0), n_mc=2000, seed=1)
        rng = np.random.default_rng(4)
        y = rng.exponential(1.0, 200)
        beta = rng.uniform(0.5, 4.0, 200)
        direct = z_inf_form(ev, y, beta)
        w = np.array([water_level(ev, b) for b in beta])
        np.testing.assert_allclose(direct, z_water_filling(y, w), atol=2e-9)

    def test_scalar(self):
        assert z_water_filling(1.0, 3.0) == 2.0
        assert z_age_threshold(4.0, 3.0) == 0.0


class TestPolicies:
    def test_uniform_for_rate(self):
        assert uniform_for_rate(0.25).period == 4.0
        assert uniform_for_rate(0.095, "discrete").period == 11.0
        assert uniform_for_rate(0.25, "discrete").period == 4.0
        with pytest.raises(ConfigError):
            uniform_for_rate(math.inf)

    def test_threshold_waiting(self):
        pol = ThresholdPolicy(beta=2.0, alpha=0.0, lam=0.5, water_level=3.0, water_level_max=5.0)
        np.testing.assert_array_equal(waiting_time(pol, np.array([1.0, 1.0, 6.0]), np.array([0.1, 0.9, 0.2])),
                                      [2.0, 4.0, 0.0])

    def test_next_sample_time(self):
        pol = ThresholdPolicy(beta=2.0, alpha=0.0, lam=1.0, water_level=3.0, water_level_max=3.0)
        assert next_sample_time(ZeroWait(), 0.0, 1.5, 1.5) == 1.5
        assert next_sample_time(Uniform(2.0), 4.0, 5.0, 1.0) == 6.0
        assert next_sample_time(pol, 0.0, 1.0, 1.0) == 3.0

    def test_threshold_policy_builder(self):
        ev = ExpectationEngine(Linear(), TwoPoint(1, 2), "discrete")
        pol = threshold_policy(ev, 4.5)
        assert (pol.water_level, pol.water_level_max) == (3.0, 4.0)
        assert pol.mode == "discrete"

    def test_invalid_lambda(self):
        with pytest.raises(ConfigError):
            ThresholdPolicy(beta=1.0, alpha=0.0, lam=1.5, water_level=0.0, water_level_max=0.0)

    def test_dict_round_trip(self):
        pol = ThresholdPolicy(beta=2.0, alpha=0.1, lam=0.3, water_level=3.0, water_level_max=4.0,
                              mode="discrete", beta_low=1.9, beta_high=2.1)
        assert policy_from_dict(pol.to_dict()) == pol
        assert policy_from_dict(Uniform(3.0).to_dict()) == Uniform(3.0)
        assert policy_from_dict(ZeroWait().to_dict()) == ZeroWait()
        with pytest.raises(ConfigError):
            policy_from_dict({"kind": "random"})

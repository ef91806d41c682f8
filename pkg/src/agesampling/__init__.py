"""Optimal sampling for age-of-information penalties.

A sampler forwards samples of a Markov source through a FIFO server with
i.i.d. service times. The package computes threshold (water-filling)
sampling policies that minimise the long-run average of a non-decreasing
age penalty, optionally subject to a maximum sampling rate, and provides
a simulator, brute-force oracles and a command-line experiment runner.
"""

__version__ = "0.1.0"

from .errors import (AgeOptError, BracketError, BudgetExceededError, ConfigError, DomainError,
                     NonFiniteExpectationError)
from .optimizer import (CycleStats, SolveConfig, SolveResult, ZeroWaitCheck, bisect_constrained,
                        bisect_unconstrained, cycle_stats, dinkelbach_gap, randomization_probability,
                        solve, zero_wait_check, zero_wait_optimal)
from .penalty import (Exponential, Linear, NegMutualInfoBinary, NegMutualInfoGauss, Penalty, Power,
                      Step, Table, penalty_from_dict)
from .policy import (ThresholdPolicy, Uniform, ZeroWait, threshold_policy, uniform_for_rate,
                     z_age_threshold, z_inf_form, z_water_filling)
from .service import (Constant, DiscretizedLogNormal, Erlang, ExpectationEngine, ExponentialService,
                      Geometric, ServiceDist, TwoPoint, service_from_dict)
from .simulator import Trajectory, age_process, renewal_average, simulate
from .sources import BinaryMarkov, GaussMarkov, mutual_info

"""Threshold computation for the optimal sampling problem.

The long-run average penalty of a queue-empty policy is a renewal-reward
ratio E[cycle penalty] / E[cycle length]. Its minimum is the unique root of
beta = ratio(beta), where ratio(beta) is evaluated under the threshold
policy with threshold beta; ``bisect_unconstrained`` finds it. When the
average sampling interval of that policy is too short for the rate limit,
``bisect_constrained`` raises the threshold until the interval constraint is
met with equality, randomising between the smallest and largest optimal
waits to hit it exactly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import BracketError, NonFiniteExpectationError
from .policy import CONTINUOUS, ThresholdPolicy, threshold_policy, water_level
from .service import DEFAULT_N_MC, ExpectationEngine, ServiceDist

EPS_MC = 1e-6
EPS_EXACT = 1e-9
MAX_DOUBLINGS = 60


@dataclass(frozen=True)
class SolveConfig:
    f_max: float = math.inf
    mode: str = CONTINUOUS
    eps: Optional[float] = None
    n_mc: int = DEFAULT_N_MC
    seed: int = 0

    def __post_init__(self):
        if not self.f_max > 0.0:
            raise ValueError("f_max must be positive (use inf for no rate limit)")
        if self.eps is not None and not self.eps > 0.0:
            raise ValueError("bisection tolerance must be positive")

    @property
    def min_interval(self) -> float:
        """1 / f_max, the smallest admissible mean sampling interval."""
        return 0.0 if math.isinf(self.f_max) else 1.0 / self.f_max

    def tolerance(self, ev: ExpectationEngine) -> float:
        if self.eps is not None:
            return self.eps
        return EPS_EXACT if ev.exact else EPS_MC


def make_engine(p, dist: ServiceDist, cfg: SolveConfig) -> ExpectationEngine:
    return ExpectationEngine(p, dist, cfg.mode, n_mc=cfg.n_mc, seed=cfg.seed)


@dataclass(frozen=True)
class CycleStats:
    """Pool averages of one renewal cycle under the waits max(w - Y, 0).

    ``mean_penalty`` and ``mean_length`` refer to the smallest optimal wait
    (water level ``water_level``); ``interval_min`` / ``interval_max`` are
    E[Y + z_min] and E[Y + z_max], the mean sampling intervals used by the
    rate-constrained search.
    """

    beta: float
    water_level: float
    water_level_max: float
    mean_penalty: float
    mean_length: float
    interval_min: float
    interval_max: float
    se: float

    @property
    def ratio(self) -> float:
        return self.mean_penalty / self.mean_length


def cycle_penalty(p, y, z, yp, discrete: bool):
    """q(y, z, y') = penalty accumulated between the deliveries bracketing a cycle.

    Continuous time: v(y + z + y') - v(y). Discrete time: the sum of p(t)
    for t = y, ..., y + z + y' - 1.
    """
    y = np.asarray(y, dtype=float)
    end = y + np.asarray(z, dtype=float) + np.asarray(yp, dtype=float)
    if discrete:
        cost = p.range_sum(np.rint(y).astype(np.int64), np.rint(end).astype(np.int64))
    else:
        cost = p.integral(end) - p.integral(y)
    cost = np.asarray(cost, dtype=float)
    if not np.all(np.isfinite(cost)):
        raise NonFiniteExpectationError("cycle penalty is not finite")
    return cost


def cycle_arrays(ev: ExpectationEngine, w: float):
    """Per-pair (cycle penalty, cycle length) for the water level ``w``."""
    z = np.maximum(w - ev.y, 0.0)
    return cycle_penalty(ev.penalty, ev.y, z, ev.yp, ev.discrete), ev.y + z


def ratio_se(ev: ExpectationEngine, cost: np.ndarray, length: np.ndarray) -> float:
    """Delta-method standard error of the pooled ratio (0 for exact laws)."""
    if ev.exact:
        return 0.0
    mean_len = ev.mean(length)
    r = ev.mean(cost) / mean_len
    resid = cost - r * length
    return math.sqrt(ev.mean(resid * resid) / ev.n_pairs) / mean_len


def cycle_stats(beta: float, p=None, dist: ServiceDist = None, mode: str = CONTINUOUS,
                ev: ExpectationEngine = None, need_max: bool = False,
                beta_low: float = None, beta_high: float = None) -> CycleStats:
    """Renewal statistics of the threshold policy at ``beta``.

    Pass either ``(p, dist, mode)`` or a prebuilt engine ``ev``.
    """
    if not math.isfinite(beta):
        raise ValueError("threshold must be finite")
    ev = ev or ExpectationEngine(p, dist, mode)
    lo = beta if beta_low is None else beta_low
    hi = beta if beta_high is None else beta_high
    w = water_level(ev, lo)
    cost, length = cycle_arrays(ev, w)
    interval_max = math.nan
    w_max = math.nan
    if need_max:
        try:
            w_max = water_level(ev, hi, strict=True)
            interval_max = ev.mean(ev.y + np.maximum(w_max - ev.y, 0.0))
        except BracketError:
            # f never exceeds the threshold: every wait beyond z_min is optimal
            w_max = interval_max = math.inf
    return CycleStats(
        beta=beta, water_level=w, water_level_max=w_max,
        mean_penalty=ev.mean(cost), mean_length=ev.mean(length),
        interval_min=ev.mean(length), interval_max=interval_max,
        se=ratio_se(ev, cost, length),
    )


@dataclass
class SolveResult:
    policy: ThresholdPolicy
    p_opt: float
    alpha: float
    constrained_active: bool
    expected_interval: float
    iterations: int
    residual: float
    se: float = 0.0
    seed: int = 0

    @property
    def beta(self) -> float:
        return self.policy.beta

    @property
    def lam(self) -> float:
        return self.policy.lam

    def to_dict(self) -> dict:
        return {
            "beta": self.beta, "alpha": self.alpha, "lambda": self.lam, "p_opt": self.p_opt,
            "expected_interval": self.expected_interval, "iterations": self.iterations,
            "residual": self.residual, "se": self.se, "seed": self.seed,
            "constrained_active": self.constrained_active,
            "water_level": self.policy.water_level, "water_level_max": self.policy.water_level_max,
            "mode": self.policy.mode,
        }


def _width(eps: float, l: float, u: float) -> float:
    """Stopping width: eps, floored at a few ulps so huge thresholds terminate."""
    return max(eps, 4.0 * math.ulp(max(abs(l), abs(u))))


def zero_wait_ratio(ev: ExpectationEngine) -> float:
    cost, length = cycle_arrays(ev, 0.0)
    return ev.mean(cost) / ev.mean(length)


def bisect_unconstrained(p, dist: ServiceDist, cfg: SolveConfig = SolveConfig(),
                         ev: ExpectationEngine = None) -> SolveResult:
    """Root of beta = E[cycle penalty] / E[cycle length] under threshold beta.

    o(beta) = beta - ratio(beta) is non-decreasing with a unique root equal to
    the optimal average penalty. The initial upper end is the zero-wait
    ratio (the value of a feasible policy, hence >= the optimum).
    """
    ev = ev or make_engine(p, dist, cfg)
    eps = cfg.tolerance(ev)
    iterations = 0

    def o(beta):
        nonlocal iterations
        iterations += 1
        return beta - cycle_stats(beta, ev=ev).ratio

    u = zero_wait_ratio(ev)
    step = max(abs(u), 1.0)
    for _ in range(MAX_DOUBLINGS):
        if o(u) >= 0.0:
            break
        u += step
        step *= 2.0
    else:
        raise BracketError("could not find an upper bisection bracket")
    step = max(abs(u), 1.0)
    for _ in range(MAX_DOUBLINGS):
        l = u - step
        if o(l) < 0.0:
            break
        u = l
        step *= 2.0
    else:
        raise BracketError("could not find a lower bisection bracket")

    while u - l > _width(eps, l, u):
        beta = 0.5 * (l + u)
        if o(beta) >= 0.0:
            u = beta
        else:
            l = beta
    beta = 0.5 * (l + u)
    st = cycle_stats(beta, ev=ev)
    pol = threshold_policy(ev, beta)
    return SolveResult(
        policy=pol, p_opt=beta, alpha=0.0, constrained_active=False,
        expected_interval=st.interval_min, iterations=iterations,
        residual=beta - st.ratio, se=st.se, seed=cfg.seed,
    )


def randomization_probability(interval_min: float, interval_max: float, target: float) -> float:
    """lambda = (E[T_max - S] - 1/f_max) / E[T_max - T_min], clipped to [0, 1].

    When both stopping times coincide any lambda is valid; 1 is returned.
    """
    gap = interval_max - interval_min
    if gap <= 0.0:
        return 1.0
    return float(min(1.0, max(0.0, (interval_max - target) / gap)))


def level_for_interval(ev: ExpectationEngine, target: float) -> float:
    """Smallest water level w (an integer in discrete time) with E[max(Y, w)] >= target."""
    def interval(w):
        return ev.mean(np.maximum(ev.y, w))

    lo, hi = 0.0, max(float(target), 0.0)
    if interval(lo) >= target:
        return 0.0
    if ev.discrete:
        lo, hi = 0, int(math.ceil(hi))
        while hi - lo > 1:
            mid = (lo + hi) // 2
            if interval(float(mid)) >= target:
                hi = mid
            else:
                lo = mid
        return float(hi)
    while hi - lo > max(1e-12, 4.0 * math.ulp(hi)):
        mid = 0.5 * (lo + hi)
        if interval(mid) >= target:
            hi = mid
        else:
            lo = mid
    return hi


def bisect_constrained(p, dist: ServiceDist, cfg: SolveConfig, ev: ExpectationEngine = None,
                       lower: float = None, iterations: int = 0) -> SolveResult:
    """Smallest-penalty policy whose mean sampling interval equals 1/f_max.

    Bisects on beta until E[T_min - S] <= 1/f_max <= E[T_max - S]. The
    returned policy uses the relaxed thresholds beta -/+ eps/2 for T_min and
    T_max, which makes the sandwich robust to the bisection error in beta.
    """
    ev = ev or make_engine(p, dist, cfg)
    eps = cfg.tolerance(ev)
    target = cfg.min_interval
    if lower is None:
        base = bisect_unconstrained(p, dist, cfg, ev)
        lower, iterations = base.beta, base.iterations

    def stats(beta):
        nonlocal iterations
        iterations += 1
        try:
            return cycle_stats(beta, ev=ev, need_max=True)
        except BracketError:
            # beta at or above sup E[p(t + Y)]: the wait, hence the interval, is unbounded
            return CycleStats(beta, math.inf, math.inf, math.inf, math.inf, math.inf, math.inf, 0.0)

    l = lower
    found = None
    step = max(abs(l), 1.0)
    for _ in range(MAX_DOUBLINGS):
        u = l + step
        st = stats(u)
        if st.interval_min > target:
            break
        if st.interval_max < target:
            l = u
            step *= 2.0
            continue
        found = u
        break
    else:
        raise BracketError("mean sampling interval never reaches 1/f_max")

    while found is None and u - l > _width(eps, l, u):
        beta = 0.5 * (l + u)
        st = stats(beta)
        if st.interval_min > target:
            u = beta
        elif st.interval_max < target:
            l = beta
        else:
            found = beta
    beta = 0.5 * (l + u) if found is None else found

    b_lo, b_hi = beta - eps / 2.0, beta + eps / 2.0
    w_min = water_level(ev, b_lo)
    try:
        w_max = water_level(ev, b_hi, strict=True)
    except BracketError:
        # unbounded optimal set [z_min, inf): any level reaching the target is optimal
        w_max = max(w_min, level_for_interval(ev, target))
    cost_min, len_min = cycle_arrays(ev, w_min)
    cost_max, len_max = cycle_arrays(ev, w_max)
    i_min, i_max = ev.mean(len_min), ev.mean(len_max)
    lam = randomization_probability(i_min, i_max, target)
    cost = lam * cost_min + (1.0 - lam) * cost_max
    length = lam * len_min + (1.0 - lam) * len_max
    interval = ev.mean(length)
    p_opt = ev.mean(cost) / interval
    pol = ThresholdPolicy(
        beta=beta, alpha=beta - p_opt, lam=lam, water_level=w_min, water_level_max=w_max,
        mode=ev.mode, beta_low=b_lo, beta_high=b_hi, engine=ev,
    )
    return SolveResult(
        policy=pol, p_opt=p_opt, alpha=beta - p_opt, constrained_active=True,
        expected_interval=interval, iterations=iterations,
        residual=interval - target, se=ratio_se(ev, cost, length), seed=cfg.seed,
    )


def solve(p, dist: ServiceDist, cfg: SolveConfig = SolveConfig(),
          ev: ExpectationEngine = None) -> SolveResult:
    """Optimal policy: the unconstrained threshold if its mean interval
    exceeds 1/f_max, otherwise the rate-constrained randomised threshold."""
    ev = ev or make_engine(p, dist, cfg)
    res = bisect_unconstrained(p, dist, cfg, ev)
    if res.expected_interval > cfg.min_interval:
        return res
    return bisect_constrained(p, dist, cfg, ev, lower=res.beta, iterations=res.iterations)


@dataclass(frozen=True)
class ZeroWaitCheck:
    optimal: bool
    lhs: float
    rhs: float

    def to_dict(self):
        return {"optimal": self.optimal, "lhs": self.lhs, "rhs": self.rhs}


def zero_wait_check(p, dist: ServiceDist, mode: str = CONTINUOUS,
                    ev: ExpectationEngine = None) -> ZeroWaitCheck:
    """Compare E[p(ess inf Y + Y')] with the zero-wait average penalty.

    In discrete time the left side is evaluated at the integer age
    ess inf Y + Y', i.e. the left limit at ess inf Y + Y' + 1 of the
    penalty extended as a staircase between integers.
    """
    ev = ev or ExpectationEngine(p, dist, mode)
    lhs = float(ev.post_service(dist.ess_inf))
    cost, _ = cycle_arrays(ev, 0.0)
    rhs = ev.mean(cost) / ev.mean(ev.y)
    ok = lhs >= rhs - 1e-12 * max(1.0, abs(rhs))
    return ZeroWaitCheck(bool(ok), lhs, float(rhs))


def zero_wait_optimal(p, dist: ServiceDist, mode: str = CONTINUOUS,
                      ev: ExpectationEngine = None) -> bool:
    return zero_wait_check(p, dist, mode, ev).optimal


def dinkelbach_gap(c: float, p=None, dist: ServiceDist = None, mode: str = CONTINUOUS,
                   ev: ExpectationEngine = None) -> float:
    """h(c) = min over waits of E[cycle penalty - c * cycle length].

    The minimising wait is z_min at threshold c, so h is evaluated in closed
    form over the pool; h(c) > 0, = 0, < 0 exactly when the optimal average
    penalty is above, equal to, or below c.
    """
    ev = ev or ExpectationEngine(p, dist, mode)
    cost, length = cycle_arrays(ev, water_level(ev, c))
    return ev.mean(cost - c * length)

"""Sampling policies expressed as waiting-time rules.

A threshold policy takes the next sample at the earliest time after the
previous delivery at which the expected penalty upon the next delivery,
f(age) = E[p(age + Y')], reaches the threshold. Because f is non-decreasing
this is equivalent to waiting until the age reaches a water level w, i.e.
Z = max(w - Y, 0). The module exposes the direct infimum form, the
age-threshold form and the water-filling form so their agreement can be
checked, and the policies themselves use the water-filling form.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Union

import numpy as np

from .errors import BracketError, ConfigError
from .service import ExpectationEngine

CONTINUOUS = "continuous"
DISCRETE = "discrete"
TIME_MODES = (CONTINUOUS, DISCRETE)

CROSSING_TOL = 1e-9
MAX_BRACKET = 2.0**40


def _check_mode(mode: str) -> str:
    if mode not in TIME_MODES:
        raise ConfigError(f"unknown time mode {mode!r}")
    return mode


def _hits(values, beta, strict: bool):
    return values > beta if strict else values >= beta


def first_crossing(ev: ExpectationEngine, beta: float, offset: float = 0.0,
                   strict: bool = False) -> float:
    """inf{t >= 0 : f(offset + t) >= beta} (or > beta when ``strict``).

    Continuous mode bisects to ``CROSSING_TOL`` and returns the upper end of
    the final bracket, which always satisfies the predicate. Discrete mode
    ranges over integers and is exact.
    """

    def ok(t):
        return _hits(ev.post_service(offset + t), beta, strict)

    if ok(0.0):
        return 0.0
    hi = 1.0
    while not ok(hi):
        hi *= 2.0
        if hi > MAX_BRACKET:
            raise BracketError(f"E[p(t + Y)] never reaches {beta!r}; check the penalty")
    lo = hi / 2.0 if hi > 1.0 else 0.0
    if ev.discrete:
        lo, hi = int(lo), int(hi)
        while hi - lo > 1:
            mid = (lo + hi) // 2
            if ok(float(mid)):
                hi = mid
            else:
                lo = mid
        return float(hi)
    while hi - lo > max(CROSSING_TOL, 4.0 * math.ulp(hi)):
        mid = 0.5 * (lo + hi)
        if ok(mid):
            hi = mid
        else:
            lo = mid
    return hi


def water_level(ev: ExpectationEngine, beta: float, strict: bool = False) -> float:
    """w(beta) = inf{age >= 0 : E[p(age + Y')] >= beta}."""
    return first_crossing(ev, beta, 0.0, strict)


def z_inf_form(ev: ExpectationEngine, y, beta, strict: bool = False):
    """Waiting time straight from its definition, inf{t >= 0 : f(y + t) >= beta}.

    Vectorised over ``y`` and ``beta``; each element runs its own bisection
    on t, independently of any water level.
    """
    y = np.asarray(y, dtype=float)
    b = np.broadcast_to(np.asarray(beta, dtype=float), y.shape)
    flat_y, flat_b = y.reshape(-1), b.reshape(-1)

    def ok(t):
        return _hits(ev.post_service(flat_y + t), flat_b, strict)

    n = flat_y.size
    t_hi = np.zeros(n)
    done = ok(t_hi)
    hi = np.ones(n)
    pending = ~done
    while np.any(pending):
        hit = ok(hi)
        pending &= ~hit
        hi = np.where(pending, hi * 2.0, hi)
        if np.any(hi > MAX_BRACKET):
            raise BracketError("E[p(t + Y)] never reaches the threshold")
    lo = np.where(hi > 1.0, hi / 2.0, 0.0)
    hi = np.where(done, 0.0, hi)
    lo = np.where(done, 0.0, lo)
    if ev.discrete:
        while True:
            active = hi - lo > 1.0
            if not np.any(active):
                break
            mid = np.floor((lo + hi) / 2.0)
            hit = ok(mid)
            hi = np.where(active & hit, mid, hi)
            lo = np.where(active & ~hit, mid, lo)
    else:
        while True:
            active = hi - lo > np.maximum(CROSSING_TOL, 4.0 * np.spacing(hi))
            if not np.any(active):
                break
            mid = 0.5 * (lo + hi)
            hit = ok(mid)
            hi = np.where(active & hit, mid, hi)
            lo = np.where(active & ~hit, mid, lo)
    out = hi.reshape(y.shape)
    return out if out.ndim else float(out)


def z_age_threshold(y, w):
    """Wait until the age t - S_i reaches w; with S_i = 0 and D_i = y."""
    y = np.asarray(y, dtype=float)
    out = np.maximum(y, w) - y
    return out if out.ndim else float(out)


def z_water_filling(y, w):
    """Z = max(w - Y, 0)."""
    out = np.maximum(w - np.asarray(y, dtype=float), 0.0)
    return out if out.ndim else float(out)


@dataclass(frozen=True)
class ZeroWait:
    kind = "zero_wait"

    def to_dict(self):
        return {"kind": "zero_wait"}


@dataclass(frozen=True)
class Uniform:
    period: float
    kind = "uniform"

    def __post_init__(self):
        if not self.period > 0.0:
            raise ConfigError("uniform sampling period must be positive")

    def to_dict(self):
        return {"kind": "uniform", "period": self.period}


def uniform_for_rate(f_max: float, mode: str = CONTINUOUS) -> Uniform:
    """Periodic sampling at rate f_max; the period is rounded up in discrete time."""
    if not 0.0 < f_max < math.inf:
        raise ConfigError("uniform sampling needs a finite positive rate")
    period = 1.0 / f_max
    if _check_mode(mode) == DISCRETE:
        period = float(math.ceil(period - 1e-9))
    return Uniform(period)


@dataclass(frozen=True)
class ThresholdPolicy:
    """Randomised threshold policy.

    With probability ``lam`` the sampler waits ``max(water_level - Y, 0)``
    (the smallest optimal wait, threshold ``beta_low`` with >=), otherwise
    ``max(water_level_max - Y, 0)`` (the largest, threshold ``beta_high``
    with >). Deterministic policies have ``lam = 1``.
    """

    beta: float
    alpha: float
    lam: float
    water_level: float
    water_level_max: float
    mode: str = CONTINUOUS
    beta_low: float = None
    beta_high: float = None
    engine: ExpectationEngine = field(default=None, repr=False, compare=False)
    kind = "threshold"

    def __post_init__(self):
        if not 0.0 <= self.lam <= 1.0:
            raise ConfigError("randomisation probability must lie in [0, 1]")
        if self.beta_low is None:
            object.__setattr__(self, "beta_low", self.beta)
        if self.beta_high is None:
            object.__setattr__(self, "beta_high", self.beta)

    def z_min(self, y):
        return z_water_filling(y, self.water_level)

    def z_max(self, y):
        return z_water_filling(y, self.water_level_max)

    def to_dict(self):
        return {
            "kind": "threshold", "beta": self.beta, "alpha": self.alpha, "lambda": self.lam,
            "water_level": self.water_level, "water_level_max": self.water_level_max,
            "beta_low": self.beta_low, "beta_high": self.beta_high, "mode": self.mode,
        }


Policy = Union[ZeroWait, Uniform, ThresholdPolicy]


def threshold_policy(ev: ExpectationEngine, beta: float, alpha: float = 0.0, lam: float = 1.0,
                     beta_low: float = None, beta_high: float = None) -> ThresholdPolicy:
    """Build a threshold policy, computing both water levels from ``ev``."""
    lo = beta if beta_low is None else beta_low
    hi = beta if beta_high is None else beta_high
    return ThresholdPolicy(
        beta=float(beta), alpha=float(alpha), lam=float(lam),
        water_level=water_level(ev, lo, strict=False),
        water_level_max=water_level(ev, hi, strict=True),
        mode=ev.mode, beta_low=float(lo), beta_high=float(hi), engine=ev,
    )


def policy_from_dict(spec: dict) -> Policy:
    kind = spec.get("kind")
    if kind == "zero_wait":
        return ZeroWait()
    if kind == "uniform":
        return Uniform(float(spec["period"]))
    if kind == "threshold":
        return ThresholdPolicy(
            beta=float(spec["beta"]), alpha=float(spec.get("alpha", 0.0)),
            lam=float(spec.get("lambda", 1.0)), water_level=float(spec["water_level"]),
            water_level_max=float(spec.get("water_level_max", spec["water_level"])),
            mode=_check_mode(spec.get("mode", CONTINUOUS)),
            beta_low=spec.get("beta_low"), beta_high=spec.get("beta_high"))
    raise ConfigError(f"unknown policy kind {kind!r}")


def waiting_time(pol: ThresholdPolicy, y, coin):
    """Z_i = z_min(Y_i) if coin < lambda else z_max(Y_i)."""
    coin = np.asarray(coin, dtype=float)
    out = np.where(coin < pol.lam, pol.z_min(y), pol.z_max(y))
    return out if out.ndim else float(out)


def next_sample_time(pol: Policy, prev_s: float, prev_d: float, y_prev: float, coin: float = 0.0) -> float:
    if isinstance(pol, ZeroWait):
        return prev_d
    if isinstance(pol, Uniform):
        return prev_s + pol.period
    return prev_d + waiting_time(pol, y_prev, coin)

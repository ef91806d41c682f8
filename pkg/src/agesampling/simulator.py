"""Event-driven simulation of the sampler, FIFO queue and receiver.

Sample i is generated at S_i, finishes service at D_i = max(S_i, D_{i-1}) +
Y_i and then resets the age to D_i - S_i = Y_i (plus any queueing delay).
Between deliveries the age grows with unit slope, so the penalty accrued
over [D_i, D_{i+1}) is v(D_{i+1} - S_i) - v(D_i - S_i) in continuous time or
the corresponding integer range sum in discrete time. No time stepping is
involved.
"""

from __future__ import annotations

import math
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DomainError
from .optimizer import cycle_penalty
from .policy import CONTINUOUS, DISCRETE, ThresholdPolicy, Uniform, ZeroWait, waiting_time
from .service import ServiceDist, make_rng

WARMUP_FRACTION = 0.01
N_BATCHES = 50
MIN_CYCLES = 100

# stream layout: replication r owns streams 1 + 4r (service) and 2 + 4r (coins)
_STREAM_SERVICE = 1
_STREAM_COIN = 2
_STREAMS_PER_REP = 4


def _streams(replication: int):
    base = _STREAMS_PER_REP * int(replication)
    return base + _STREAM_SERVICE, base + _STREAM_COIN


@dataclass(frozen=True)
class Trajectory:
    """Per-sample records. ``Z[i]`` is the idle time between D_i and S_{i+1}
    (0 when the next sample was already waiting in the queue)."""

    S: np.ndarray
    Z: np.ndarray
    Y: np.ndarray
    D: np.ndarray
    horizon: float
    mode: str = CONTINUOUS
    seed: int = 0
    initial_age: float = 0.0

    def __len__(self):
        return len(self.S)

    @property
    def i(self) -> np.ndarray:
        return np.arange(len(self.S))

    def to_csv(self, path) -> None:
        data = np.column_stack([self.i, self.S, self.Z, self.Y, self.D])
        np.savetxt(path, data, delimiter=",", header="i,S,Z,Y,D", comments="",
                   fmt=["%d", "%.17g", "%.17g", "%.17g", "%.17g"])


@dataclass(frozen=True)
class SimResult:
    trajectory: Trajectory
    avg_penalty: float
    avg_interval: float
    se: float
    se_interval: float
    cycles: int
    seed: int
    policy: str = ""

    def __iter__(self):
        return iter((self.trajectory, self.avg_penalty, self.avg_interval))

    def to_dict(self) -> dict:
        return {"policy": self.policy, "avg_penalty": self.avg_penalty,
                "avg_interval": self.avg_interval, "se": self.se, "cycles": self.cycles,
                "seed": self.seed}


def _policy_name(pol) -> str:
    return getattr(pol, "kind", type(pol).__name__)


def _generate(pol, y: np.ndarray, coins: np.ndarray):
    """Sampling and delivery times for the service draws ``y``."""
    if isinstance(pol, Uniform):
        s = pol.period * np.arange(len(y), dtype=float)
        c = np.cumsum(y)
        c_prev = np.concatenate([[0.0], c[:-1]])
        # Lindley recursion D_i = max(S_i, D_{i-1}) + Y_i in closed form
        d = c + np.maximum.accumulate(s - c_prev)
        z = np.maximum(np.concatenate([s[1:], [np.nan]]) - d, 0.0)
        z[-1] = 0.0
        return s, z, d
    if isinstance(pol, ZeroWait):
        z = np.zeros_like(y)
    elif isinstance(pol, ThresholdPolicy):
        z = np.asarray(waiting_time(pol, y, coins), dtype=float)
    else:
        raise ConfigError(f"unsupported policy {pol!r}")
    s = np.concatenate([[0.0], np.cumsum(y + z)[:-1]])
    return s, z, s + y


def _ratio_se(num: np.ndarray, den: np.ndarray, n_batches: int) -> float:
    """Batch-means delta-method standard error of sum(num) / sum(den)."""
    n = len(num)
    b = min(n_batches, n)
    if b < 2:
        return 0.0
    edges = np.linspace(0, n, b + 1).astype(int)
    a = np.add.reduceat(num, edges[:-1])
    d = np.add.reduceat(den, edges[:-1])
    r = a.sum() / d.sum()
    resid = a - r * d
    return float(math.sqrt(np.sum(resid**2) / (b * (b - 1))) / d.mean())


def _mean_se(x: np.ndarray, n_batches: int) -> float:
    return _ratio_se(x, np.ones_like(x), n_batches)


def _check_discrete_times(*arrays):
    for a in arrays:
        if np.any(np.abs(a - np.rint(a)) > 1e-9):
            raise DomainError("discrete-time simulation needs integer sampling and service times")


def simulate(pol, dist: ServiceDist, p, horizon: float = None, seed: int = 0,
             mode: str = CONTINUOUS, n_cycles: int = None, initial_age: float = 0.0,
             replication: int = 0, warmup_fraction: float = WARMUP_FRACTION,
             n_batches: int = N_BATCHES) -> SimResult:
    """Simulate ``pol`` until time ``horizon`` (or for ``n_cycles`` deliveries).

    The average penalty is taken over the inter-delivery intervals left after
    discarding the first ``warmup_fraction`` of them; ``avg_interval`` is the
    mean gap between consecutive sampling times over the same window. The
    standard errors use batch means over consecutive cycles.
    """
    if mode not in (CONTINUOUS, DISCRETE):
        raise ConfigError(f"unknown time mode {mode!r}")
    if (horizon is None) == (n_cycles is None):
        raise ConfigError("give exactly one of horizon and n_cycles")
    if mode == DISCRETE and not dist.is_discrete:
        raise DomainError("discrete-time mode needs integer-valued service times")
    s_stream, c_stream = _streams(replication)

    def draw(n):
        y = dist.sample(make_rng(seed, s_stream), n)
        coins = make_rng(seed, c_stream).random(n)
        return y, coins

    if n_cycles is not None:
        n = int(n_cycles) + 1
        y, coins = draw(n)
        s, z, d = _generate(pol, y, coins)
        horizon = float(d[-1])
    else:
        if not horizon > 0.0:
            raise ConfigError("horizon must be positive")
        step = pol.period if isinstance(pol, Uniform) else dist.mean
        n = max(16, int(math.ceil(1.05 * horizon / max(step, 1e-12))) + 2)
        while True:
            y, coins = draw(n)
            s, z, d = _generate(pol, y, coins)
            if d[-1] >= horizon:
                break
            n *= 2
        keep = int(np.searchsorted(d, horizon, side="right"))
        s, z, y, d = s[:keep], z[:keep], y[:keep], d[:keep]
    if mode == DISCRETE:
        _check_discrete_times(s, y, d)
    traj = Trajectory(S=s, Z=z, Y=y, D=d, horizon=float(horizon), mode=mode,
                      seed=seed, initial_age=initial_age)

    intervals = len(d) - 1
    if intervals < MIN_CYCLES:
        warnings.warn(f"only {intervals} delivery cycles completed", RuntimeWarning)
    if intervals < 1:
        raise ConfigError("horizon too short for a single delivery cycle")
    start_age = d[:-1] - s[:-1]
    end_age = d[1:] - s[:-1]
    pen = cycle_penalty(p, start_age, end_age - start_age, 0.0, mode == DISCRETE)
    length = d[1:] - d[:-1]
    gaps = s[1:] - s[:-1]
    k0 = int(intervals * warmup_fraction)
    pen, length, gaps = pen[k0:], length[k0:], gaps[k0:]
    if k0 == 0:
        # the window starts at time 0: include the segment before the first delivery
        first = cycle_penalty(p, initial_age, d[0], 0.0, mode == DISCRETE)
        pen = np.concatenate([[float(first)], pen])
        length = np.concatenate([[d[0]], length])
    avg = float(pen.sum() / length.sum())
    return SimResult(
        trajectory=traj, avg_penalty=avg, avg_interval=float(gaps.mean()),
        se=_ratio_se(pen, length, n_batches), se_interval=_mean_se(gaps, n_batches),
        cycles=len(gaps), seed=seed, policy=_policy_name(pol),
    )


def _simulate_job(args):
    pol, dist, p, kwargs = args
    return simulate(pol, dist, p, **kwargs)


def simulate_replications(pol, dist: ServiceDist, p, n_reps: int, workers: int = 1, **kwargs):
    """Independent replications (replication r uses its own rng streams).

    Results come back in replication order whatever the completion order.
    """
    jobs = [(pol, dist, p, dict(kwargs, replication=r)) for r in range(n_reps)]
    if workers <= 1:
        return [_simulate_job(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(_simulate_job, jobs))


@dataclass(frozen=True)
class RenewalEstimate:
    avg_penalty: float
    avg_interval: float
    se: float

    def __iter__(self):
        return iter((self.avg_penalty, self.avg_interval, self.se))


def renewal_average(pol, dist: ServiceDist, p, n_cycles: int, seed: int = 0,
                    mode: str = CONTINUOUS, replication: int = 0) -> RenewalEstimate:
    """Ratio of means E[q(Y, Z, Y')] / E[Y + Z] over ``n_cycles`` i.i.d. pairs.

    Only valid for policies that keep the queue empty, whose cycles
    regenerate at every delivery.
    """
    if isinstance(pol, Uniform):
        raise ConfigError("renewal averaging needs a policy that keeps the queue empty")
    if mode == DISCRETE and not dist.is_discrete:
        raise DomainError("discrete-time mode needs integer-valued service times")
    s_stream, c_stream = _streams(replication)
    rng = make_rng(seed, s_stream)
    n = int(n_cycles)
    y = dist.sample(rng, n)
    yp = dist.sample(rng, n)
    if isinstance(pol, ZeroWait):
        z = np.zeros(n)
    else:
        z = np.asarray(waiting_time(pol, y, make_rng(seed, c_stream).random(n)), dtype=float)
    q = cycle_penalty(p, y, z, yp, mode == DISCRETE)
    length = y + z
    r = float(q.mean() / length.mean())
    se = 0.0
    if n > 1:
        resid = q - r * length
        se = float(math.sqrt(np.mean(resid**2) / n) / length.mean())
    return RenewalEstimate(r, float(length.mean()), se)


def age_process(traj: Trajectory, t):
    """Delta_t = t - S_i for D_i <= t < D_{i+1}; initial_age + t before D_0."""
    t = np.asarray(t, dtype=float)
    if np.any(t < 0.0):
        raise DomainError("time must be non-negative")
    idx = np.searchsorted(traj.D, t, side="right") - 1
    s = traj.S[np.maximum(idx, 0)]
    out = np.where(idx < 0, traj.initial_age + t, t - s)
    return out if out.ndim else float(out)

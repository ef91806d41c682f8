"""Service-time laws of the FIFO server and the shared expectation engine."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Tuple, Union

import numpy as np
from scipy import special

from .errors import ConfigError, DomainError, NonFiniteExpectationError

DEFAULT_N_MC = 100_000
STREAM_POOL = 0

Array = np.ndarray


def make_rng(seed: int, stream: int = 0) -> np.random.Generator:
    """Counter-based (Philox) generator for ``(seed, stream)``.

    Distinct streams are statistically independent, so workers and
    replications can own private generators without coordination.
    """
    if not 0 <= int(seed) < 2**64:
        raise ConfigError("seed must be an unsigned 64-bit integer")
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=(int(stream),))
    return np.random.Generator(np.random.Philox(ss))


def _is_int(x: float) -> bool:
    return float(x).is_integer()


class ServiceDist:
    """Base class for i.i.d. service-time laws."""

    kind = "abstract"
    is_discrete = False

    @property
    def mean(self) -> float:
        raise NotImplementedError

    @property
    def variance(self) -> float:
        raise NotImplementedError

    @property
    def ess_inf(self) -> float:
        raise NotImplementedError

    @property
    def finite_support(self) -> bool:
        return self.support() is not None

    def support(self) -> Optional[Tuple[Array, Array]]:
        """(values, probabilities) when the support is finite, else None."""
        return None

    def sample(self, rng: np.random.Generator, size: int) -> Array:
        raise NotImplementedError

    def law(self, n_mc: int = DEFAULT_N_MC, seed: int = 0) -> Tuple[Array, Array]:
        """Exact law if finite, otherwise an empirical law of ``n_mc`` draws."""
        sup = self.support()
        if sup is not None:
            return sup
        draws = self.sample(make_rng(seed, STREAM_POOL), n_mc)
        if self.is_discrete:
            vals, counts = np.unique(draws, return_counts=True)
            return vals.astype(float), counts / counts.sum()
        return draws, np.full(n_mc, 1.0 / n_mc)

    def to_dict(self) -> dict:
        raise NotImplementedError


@dataclass(frozen=True)
class Constant(ServiceDist):
    y: float
    kind = "constant"

    def __post_init__(self):
        if not self.y > 0.0:
            raise ConfigError("constant service time must be positive")

    @property
    def is_discrete(self):
        return _is_int(self.y)

    mean = property(lambda self: float(self.y))
    variance = property(lambda self: 0.0)
    ess_inf = property(lambda self: float(self.y))

    def support(self):
        return np.array([float(self.y)]), np.array([1.0])

    def sample(self, rng, size):
        return np.full(size, float(self.y))

    def to_dict(self):
        return {"kind": "constant", "y": self.y}


@dataclass(frozen=True)
class TwoPoint(ServiceDist):
    """Y = y1 with probability p1, else y2."""

    y1: float
    y2: float
    p1: float = 0.5
    kind = "two_point"

    def __post_init__(self):
        if not 0.0 < self.y1 < self.y2:
            raise ConfigError("two-point law needs 0 < y1 < y2")
        if not 0.0 < self.p1 < 1.0:
            raise ConfigError("two-point probability must lie in (0, 1)")

    @property
    def is_discrete(self):
        return _is_int(self.y1) and _is_int(self.y2)

    @property
    def mean(self):
        return self.p1 * self.y1 + (1.0 - self.p1) * self.y2

    @property
    def variance(self):
        return self.p1 * (1.0 - self.p1) * (self.y2 - self.y1) ** 2

    ess_inf = property(lambda self: float(self.y1))

    def support(self):
        return np.array([float(self.y1), float(self.y2)]), np.array([self.p1, 1.0 - self.p1])

    def sample(self, rng, size):
        return np.where(rng.random(size) < self.p1, float(self.y1), float(self.y2))

    def to_dict(self):
        return {"kind": "two_point", "y1": self.y1, "y2": self.y2, "p1": self.p1}


@dataclass(frozen=True)
class ExponentialService(ServiceDist):
    rate: float
    kind = "exponential"

    def __post_init__(self):
        if not self.rate > 0.0:
            raise ConfigError("exponential rate must be positive")

    mean = property(lambda self: 1.0 / self.rate)
    variance = property(lambda self: 1.0 / self.rate**2)
    ess_inf = property(lambda self: 0.0)

    def sample(self, rng, size):
        return rng.exponential(1.0 / self.rate, size)

    def to_dict(self):
        return {"kind": "exponential", "rate": self.rate}


@dataclass(frozen=True)
class Erlang(ServiceDist):
    k: int
    rate: float
    kind = "erlang"

    def __post_init__(self):
        if not (int(self.k) == self.k and self.k >= 1):
            raise ConfigError("Erlang shape must be a positive integer")
        if not self.rate > 0.0:
            raise ConfigError("Erlang rate must be positive")

    mean = property(lambda self: self.k / self.rate)
    variance = property(lambda self: self.k / self.rate**2)
    ess_inf = property(lambda self: 0.0)

    def sample(self, rng, size):
        return rng.gamma(float(self.k), 1.0 / self.rate, size)

    def to_dict(self):
        return {"kind": "erlang", "k": self.k, "rate": self.rate}


@dataclass(frozen=True)
class DiscretizedLogNormal(ServiceDist):
    """Y = ceil(exp(sigma X) / E[exp(sigma X)]) with X standard normal.

    sigma = 0 gives the constant law Y = 1.
    """

    sigma: float
    kind = "discretized_lognormal"
    is_discrete = True

    def __post_init__(self):
        if not self.sigma >= 0.0:
            raise ConfigError("log-normal sigma must be non-negative")

    def _tail(self) -> Tuple[Array, Array]:
        # P(Y > k) = P(L > k) for k = 0, 1, 2, ... until negligible
        s = self.sigma
        k_max = min(int(math.ceil(math.exp(s * 8.5 - s * s / 2.0))) + 2, 20_000_000)
        k = np.arange(1, k_max, dtype=float)
        tail = special.ndtr(-(np.log(k) + s * s / 2.0) / s)
        return np.concatenate([[0.0], k]), np.concatenate([[1.0], tail])

    @property
    def mean(self):
        if self.sigma == 0.0:
            return 1.0
        _, tail = self._tail()
        return float(math.fsum(tail))

    @property
    def variance(self):
        if self.sigma == 0.0:
            return 0.0
        k, tail = self._tail()
        second = math.fsum((2.0 * k + 1.0) * tail)
        return second - self.mean**2

    ess_inf = property(lambda self: 1.0)

    def support(self):
        if self.sigma == 0.0:
            return np.array([1.0]), np.array([1.0])
        return None

    def sample(self, rng, size):
        s = self.sigma
        x = rng.standard_normal(size)
        return np.maximum(np.ceil(np.exp(s * x - s * s / 2.0)), 1.0)

    def to_dict(self):
        return {"kind": "discretized_lognormal", "sigma": self.sigma}


@dataclass(frozen=True)
class Geometric(ServiceDist):
    """Pr[Y = k] = (1 - p)^(k-1) p for k = 1, 2, ..."""

    p: float
    kind = "geometric"
    is_discrete = True

    def __post_init__(self):
        if not 0.0 < self.p <= 1.0:
            raise ConfigError("geometric success probability must lie in (0, 1]")

    mean = property(lambda self: 1.0 / self.p)
    variance = property(lambda self: (1.0 - self.p) / self.p**2)
    ess_inf = property(lambda self: 1.0)

    def support(self):
        if self.p == 1.0:
            return np.array([1.0]), np.array([1.0])
        return None

    def sample(self, rng, size):
        return rng.geometric(self.p, size).astype(float)

    def to_dict(self):
        return {"kind": "geometric", "p": self.p}


_KINDS = {
    "constant": lambda s: Constant(float(s["y"])),
    "two_point": lambda s: TwoPoint(float(s["y1"]), float(s["y2"]), float(s.get("p1", 0.5))),
    "exponential": lambda s: ExponentialService(float(s["rate"])),
    "erlang": lambda s: Erlang(int(s["k"]), float(s["rate"])),
    "discretized_lognormal": lambda s: DiscretizedLogNormal(float(s["sigma"])),
    "geometric": lambda s: Geometric(float(s["p"])),
}


def service_from_dict(spec: dict) -> ServiceDist:
    try:
        make = _KINDS[spec["kind"]]
    except (KeyError, TypeError) as exc:
        raise ConfigError(f"unknown service spec {spec!r}") from exc
    try:
        return make(spec)
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"bad service spec {spec!r}: {exc}") from exc


def draw_service(dist: ServiceDist, rng: np.random.Generator) -> float:
    return float(dist.sample(rng, 1)[0])


def ess_inf(dist: ServiceDist) -> float:
    """inf{y : Pr[Y <= y] > 0}."""
    return dist.ess_inf


TimeModeName = str  # "continuous" | "discrete"

_CHUNK = 1 << 22


@dataclass
class ExpectationEngine:
    """Expectations over the service law, shared by every evaluation of a solve.

    Finite-support laws are enumerated exactly: ``pairs`` is the product
    support of (Y, Y'). Otherwise ``n_mc`` (Y, Y') pairs are drawn once from
    the seeded pool stream and reused (common random numbers), which makes
    the bisection objectives deterministic and monotone in the threshold.
    ``marginal`` is the law of Y' used for the post-service expectation.
    """

    penalty: object
    dist: ServiceDist
    mode: TimeModeName = "continuous"
    n_mc: int = DEFAULT_N_MC
    seed: int = 0
    exact: bool = field(init=False)
    y: Array = field(init=False, repr=False)
    yp: Array = field(init=False, repr=False)
    weight: Array = field(init=False, repr=False)
    vals: Array = field(init=False, repr=False)
    probs: Array = field(init=False, repr=False)

    def __post_init__(self):
        if self.mode not in ("continuous", "discrete"):
            raise ConfigError(f"unknown time mode {self.mode!r}")
        if self.mode == "discrete" and not self.dist.is_discrete:
            raise DomainError("discrete-time mode needs integer-valued service times")
        sup = self.dist.support()
        self.exact = sup is not None
        if self.exact:
            v, pr = sup
            self.vals, self.probs = v, pr
            self.y = np.repeat(v, len(v))
            self.yp = np.tile(v, len(v))
            self.weight = np.outer(pr, pr).reshape(-1)
            return
        rng = make_rng(self.seed, STREAM_POOL)
        y = self.dist.sample(rng, self.n_mc)
        yp = self.dist.sample(rng, self.n_mc)
        if self.dist.is_discrete:
            pairs, counts = np.unique(np.stack([y, yp], axis=1), axis=0, return_counts=True)
            self.y, self.yp = pairs[:, 0].copy(), pairs[:, 1].copy()
            self.weight = counts / counts.sum()
            self.vals, c = np.unique(yp, return_counts=True)
            self.probs = c / c.sum()
        else:
            self.y, self.yp = y, yp
            self.weight = np.full(self.n_mc, 1.0 / self.n_mc)
            self.vals, self.probs = yp, self.weight

    @property
    def discrete(self) -> bool:
        return self.mode == "discrete"

    @property
    def n_pairs(self) -> int:
        """Number of i.i.d. draws behind an MC estimate (inf when exact)."""
        return math.inf if self.exact else self.n_mc

    def mean(self, values: Array) -> float:
        """Pool average of a per-pair quantity."""
        return float(np.dot(self.weight, values))

    def post_service(self, delta) -> Union[float, Array]:
        """f(delta) = E[p(delta + Y')] for scalar or array ``delta``."""
        d = np.asarray(delta, dtype=float)
        flat = d.reshape(-1)
        out = np.empty(flat.shape)
        rows = max(1, _CHUNK // max(len(self.vals), 1))
        for start in range(0, len(flat), rows):
            block = flat[start:start + rows]
            out[start:start + rows] = self.penalty(block[:, None] + self.vals[None, :]) @ self.probs
        if not np.all(np.isfinite(out)):
            raise NonFiniteExpectationError("E[p(delta + Y)] is not finite")
        out = out.reshape(d.shape)
        return out if out.ndim else float(out)


def expected_penalty_after_service(p, dist: ServiceDist, delta, ev: Optional[ExpectationEngine] = None,
                                   mode: TimeModeName = "continuous"):
    """E[p(delta + Y)], exact for finite-support laws and pooled MC otherwise."""
    if ev is None:
        ev = ExpectationEngine(p, dist, mode)
    return ev.post_service(delta)

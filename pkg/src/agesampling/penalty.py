"""Catalog of non-decreasing age penalty functions.

Every penalty maps an age in [0, inf) to a real number and is non-decreasing.
Besides pointwise evaluation each variant provides the running integral
``v(s) = int_0^s p(t) dt`` used by continuous-time cycle costs and the
integer range sum ``sum_{t=lo}^{hi-1} p(t)`` used by discrete-time costs.
All three accept scalars or numpy arrays.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Tuple

import numpy as np
from scipy import integrate, special

from .errors import ConfigError, DomainError
from .sources import LN2, binary_markov_mi, gauss_markov_mi

QUAD_ABS_TOL = 1e-9
QUAD_MAX_SUBINTERVALS = 2**20
MAX_PREFIX_TABLE = 50_000_000

# Prefix-sum tables keyed by (frozen, hashable) penalty instance.
_PREFIX_CACHE: dict = {}


def _out(x: np.ndarray):
    return x if x.ndim else float(x)


def _check_age(delta) -> np.ndarray:
    d = np.asarray(delta, dtype=float)
    if np.any(d < 0.0) or np.any(np.isnan(d)):
        raise DomainError("age must be non-negative")
    return d


class Penalty:
    """Base class; subclasses implement ``_eval`` and optionally closed forms."""

    kind = "abstract"

    def __call__(self, delta):
        return _out(self._eval(_check_age(delta)))

    def _eval(self, d: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    # -- continuous time ----------------------------------------------------
    def integral(self, s):
        s = _check_age(s)
        return _out(self._integral(s))

    def _integral(self, s: np.ndarray) -> np.ndarray:
        flat = s.reshape(-1)
        uniq, inv = np.unique(flat, return_inverse=True)
        vals = np.array([self._quad(float(u)) for u in uniq])
        return vals[inv].reshape(s.shape)

    def _quad(self, s: float) -> float:
        if s == 0.0:
            return 0.0
        # open-interval rule keeps the integrable singularity at 0 unevaluated
        val, _ = integrate.quad(lambda t: float(self._eval(np.asarray(t))), 0.0, s,
                                epsabs=QUAD_ABS_TOL, epsrel=1e-12, limit=QUAD_MAX_SUBINTERVALS)
        return val

    # -- discrete time ------------------------------------------------------
    def range_sum(self, lo, hi):
        """sum_{t=lo}^{hi-1} p(t) for integer arrays with 0 <= lo <= hi."""
        lo = np.asarray(lo, dtype=np.int64)
        hi = np.asarray(hi, dtype=np.int64)
        if np.any(lo < 0) or np.any(hi < lo):
            raise DomainError("range sum needs 0 <= lo <= hi")
        return _out(self._range_sum(lo, hi))

    def _range_sum(self, lo: np.ndarray, hi: np.ndarray) -> np.ndarray:
        lo, hi = np.broadcast_arrays(lo, hi)
        table = self._prefix(int(hi.max(initial=1)))
        lo1 = np.maximum(lo, 1)
        hi1 = np.maximum(hi, 1)
        out = table[hi1] - table[lo1]
        if np.any((lo == 0) & (hi > 0)):
            out = out + np.where((lo == 0) & (hi > 0), self._eval(np.zeros(1))[0], 0.0)
        return out

    def _prefix(self, n_max: int) -> np.ndarray:
        """table[n] = sum_{t=1}^{n-1} p(t) for 1 <= n <= n_max (table[0] unused)."""
        table = _PREFIX_CACHE.get(self)
        if table is not None and len(table) > n_max:
            return table
        size = max(n_max + 1, 2 * (len(table) if table is not None else 0), 1024)
        if size > MAX_PREFIX_TABLE:
            raise DomainError(f"discrete range sum up to {n_max} exceeds table cap")
        terms = self._eval(np.arange(1, size - 1, dtype=float))
        table = np.empty(size)
        table[0] = np.nan
        table[1] = 0.0
        np.cumsum(terms, out=table[2:])
        _PREFIX_CACHE[self] = table
        return table

    def to_dict(self) -> dict:
        raise NotImplementedError


@dataclass(frozen=True)
class Linear(Penalty):
    kind = "linear"

    def _eval(self, d):
        return d.copy()

    def _integral(self, s):
        return 0.5 * s * s

    def _range_sum(self, lo, hi):
        lo = lo.astype(float)
        hi = hi.astype(float)
        return 0.5 * (hi * (hi - 1.0) - lo * (lo - 1.0))

    def to_dict(self):
        return {"kind": "linear"}


@dataclass(frozen=True)
class Exponential(Penalty):
    """p(d) = exp(alpha d) - 1; alpha = 0 is the constant-zero penalty."""

    alpha: float
    kind = "exponential"

    def __post_init__(self):
        if not self.alpha >= 0.0:
            raise ConfigError("exponential penalty rate must be non-negative")

    def _eval(self, d):
        with np.errstate(over="ignore"):
            return np.expm1(self.alpha * d)

    def _integral(self, s):
        a = self.alpha
        if a == 0.0:
            return np.zeros_like(s)
        x = a * s
        small = np.abs(x) < 1e-5
        # series keeps (expm1(x) - x)/a accurate for tiny x
        series = s * (x / 2.0 + x * x / 6.0 + x**3 / 24.0)
        with np.errstate(over="ignore"):
            direct = (np.expm1(x) - x) / a
        return np.where(small, series, direct)

    def _range_sum(self, lo, hi):
        a = self.alpha
        n = (hi - lo).astype(float)
        if a == 0.0:
            return np.zeros(np.broadcast(lo, hi).shape)
        with np.errstate(over="ignore"):
            geo = np.exp(a * lo) * np.expm1(a * n) / math.expm1(a)
        return geo - n

    def to_dict(self):
        return {"kind": "exponential", "alpha": self.alpha}


@dataclass(frozen=True)
class Power(Penalty):
    """p(d) = d**k with k >= 1."""

    k: float
    kind = "power"

    def __post_init__(self):
        if not self.k >= 1.0:
            raise ConfigError("power penalty exponent must be >= 1")

    def _eval(self, d):
        return np.power(d, self.k)

    def _integral(self, s):
        return np.power(s, self.k + 1.0) / (self.k + 1.0)

    def to_dict(self):
        return {"kind": "power", "k": self.k}


@dataclass(frozen=True)
class Step(Penalty):
    """p(d) = 1 for d > threshold, else 0 (left-continuous)."""

    threshold: float
    kind = "step"

    def __post_init__(self):
        if not self.threshold >= 0.0:
            raise ConfigError("step threshold must be non-negative")

    def _eval(self, d):
        return (d > self.threshold).astype(float)

    def _integral(self, s):
        return np.maximum(s - self.threshold, 0.0)

    def to_dict(self):
        return {"kind": "step", "threshold": self.threshold}


@dataclass(frozen=True)
class Table(Penalty):
    """Left-continuous staircase: value ``values[k]`` on (b_k, b_{k+1}].

    ``values[0]`` also covers [0, b_0]; the last value extends to infinity.
    """

    breakpoints: Tuple[float, ...]
    values: Tuple[float, ...]
    kind = "table"

    def __post_init__(self):
        b = np.asarray(self.breakpoints, dtype=float)
        v = np.asarray(self.values, dtype=float)
        if b.ndim != 1 or len(b) == 0 or len(b) != len(v):
            raise ConfigError("table needs equally many breakpoints and values")
        if b[0] < 0.0 or np.any(np.diff(b) <= 0.0):
            raise ConfigError("table breakpoints must be non-negative and strictly increasing")
        if np.any(np.diff(v) < 0.0):
            raise ConfigError("table values must be non-decreasing")
        object.__setattr__(self, "breakpoints", tuple(float(x) for x in b))
        object.__setattr__(self, "values", tuple(float(x) for x in v))

    def _index(self, d):
        b = np.asarray(self.breakpoints)
        return np.maximum(np.searchsorted(b, d, side="left") - 1, 0)

    def _eval(self, d):
        return np.asarray(self.values)[self._index(d)]

    def _integral(self, s):
        b = np.asarray(self.breakpoints)
        v = np.asarray(self.values)
        # area accumulated up to each breakpoint
        area = np.concatenate([[v[0] * b[0]], v[0] * b[0] + np.cumsum(v[:-1] * np.diff(b))])
        k = self._index(s)
        before = s <= b[0]
        return np.where(before, v[0] * s, area[k] + v[k] * (s - b[k]))

    def to_dict(self):
        return {"kind": "table", "breakpoints": list(self.breakpoints), "values": list(self.values)}


@dataclass(frozen=True)
class NegMutualInfoGauss(Penalty):
    """p(d) = -I(d) for a Gauss-Markov source with coefficient ``a``."""

    a: float
    kind = "neg_mi_gauss"

    def __post_init__(self):
        if not -1.0 < self.a < 1.0:
            raise ConfigError("Gauss-Markov coefficient must lie in (-1, 1)")

    def _eval(self, d):
        if np.any(d == 0.0):
            raise DomainError("Gauss-Markov information is infinite at age 0")
        return -np.asarray(gauss_markov_mi(self.a, d))

    def _integral(self, s):
        r = self.a * self.a
        if r == 0.0:
            return np.zeros_like(s)
        # int_0^s ln(1 - r^t) dt = (Li2(r^s) - pi^2/6) / ln(1/r)
        li2 = special.spence(1.0 - np.power(r, s))
        return (li2 - math.pi**2 / 6.0) / (2.0 * LN2 * -math.log(r))

    def to_dict(self):
        return {"kind": "neg_mi_gauss", "a": self.a}


@dataclass(frozen=True)
class NegMutualInfoBinary(Penalty):
    """p(d) = -I(d) for the binary symmetric Markov source with flip prob ``q``."""

    q: float
    kind = "neg_mi_binary"

    def __post_init__(self):
        if not 0.0 <= self.q <= 0.5:
            raise ConfigError("flip probability must lie in [0, 1/2]")

    def _eval(self, d):
        return -np.asarray(binary_markov_mi(self.q, d), dtype=float)

    def to_dict(self):
        return {"kind": "neg_mi_binary", "q": self.q}


PenaltyFn = Penalty

_KINDS = {
    "linear": lambda s: Linear(),
    "exponential": lambda s: Exponential(float(s["alpha"])),
    "power": lambda s: Power(float(s["k"])),
    "step": lambda s: Step(float(s["threshold"])),
    "table": lambda s: Table(tuple(s["breakpoints"]), tuple(s["values"])),
    "neg_mi_gauss": lambda s: NegMutualInfoGauss(float(s["a"])),
    "neg_mi_binary": lambda s: NegMutualInfoBinary(float(s["q"])),
}


def penalty_from_dict(spec: dict) -> Penalty:
    try:
        make = _KINDS[spec["kind"]]
    except (KeyError, TypeError) as exc:
        raise ConfigError(f"unknown penalty spec {spec!r}") from exc
    try:
        return make(spec)
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"bad penalty spec {spec!r}: {exc}") from exc


def eval_penalty(p: Penalty, delta):
    return p(delta)


def penalty_integral(p: Penalty, s):
    """v(s) = int_0^s p(t) dt."""
    return p.integral(s)


def penalty_cumsum(p: Penalty, n):
    """V(n) = sum_{t=0}^{n-1} p(t), with V(0) = 0."""
    n = np.asarray(n, dtype=np.int64)
    return p.range_sum(np.zeros_like(n), n)

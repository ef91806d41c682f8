"""Markov information sources and their age-indexed freshness metrics.

A source is described by its law only. Because sampling times are chosen
independently of the signal, the mutual information between the current
value and the freshest delivered sample depends on the sample path only
through the age, so no signal realisations are ever generated here.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Union

import numpy as np

from .errors import ConfigError, DomainError

_MI_SERIES_CUTOFF = 0.5
_MI_SERIES_TERMS = 30

LN2 = math.log(2.0)


def binary_entropy(x):
    """Binary entropy in bits, with h(0) = h(1) = 0."""
    x = np.asarray(x, dtype=float)
    out = np.zeros_like(x)
    inner = (x > 0.0) & (x < 1.0)
    xi = x[inner]
    out[inner] = -(xi * np.log2(xi) + (1.0 - xi) * np.log2(1.0 - xi))
    return out if out.ndim else float(out)


def gauss_markov_mi(a: float, delta):
    """I(X_t; X_{t-delta}) in bits for X_t = a X_{t-1} + V_t.

    Real-valued ages are accepted so the same expression can drive
    continuous-time experiments.
    """
    d = np.asarray(delta, dtype=float)
    if np.any(d <= 0.0):
        raise DomainError("Gauss-Markov mutual information is infinite at age 0")
    r = a * a
    if r == 0.0:
        out = np.zeros_like(d)
    else:
        out = -0.5 * np.log1p(-np.power(r, d)) / LN2
    return out if out.ndim else float(out)


def binary_markov_mi(q: float, delta):
    """I(X_t; X_{t-delta}) in bits for the binary symmetric chain with flip prob q."""
    d = np.asarray(delta, dtype=float)
    if np.any(d < 0.0):
        raise DomainError("age must be non-negative")
    r = np.abs(np.power(1.0 - 2.0 * q, d))
    # 1 - h((1 - r)/2) = [(1+r) ln(1+r) + (1-r) ln(1-r)] / (2 ln 2), which cancels
    # badly for small r; there the series sum_k r^(2k) / (2k (2k-1) ln 2) is used
    with np.errstate(divide="ignore", invalid="ignore"):
        closed = ((1.0 + r) * np.log1p(r) + np.where(r < 1.0, (1.0 - r) * np.log1p(-r), 0.0)) / (2.0 * LN2)
    r2 = r * r
    series = np.zeros_like(r)
    term = np.ones_like(r)
    for k in range(1, _MI_SERIES_TERMS + 1):
        term = term * r2
        series = series + term / (2 * k * (2 * k - 1))
    out = np.where(r < _MI_SERIES_CUTOFF, series / LN2, closed)
    return out if np.ndim(out) else float(out)


@dataclass(frozen=True)
class GaussMarkov:
    a: float
    sigma2: float = 1.0

    def __post_init__(self):
        if not -1.0 < self.a < 1.0:
            raise ConfigError(f"Gauss-Markov coefficient a must lie in (-1, 1), got {self.a}")
        if not self.sigma2 > 0.0:
            raise ConfigError("noise variance must be positive")

    def to_dict(self) -> dict:
        return {"kind": "gauss_markov", "a": self.a, "sigma2": self.sigma2}


@dataclass(frozen=True)
class BinaryMarkov:
    q: float

    def __post_init__(self):
        if not 0.0 <= self.q <= 0.5:
            raise ConfigError(f"flip probability q must lie in [0, 1/2], got {self.q}")

    def to_dict(self) -> dict:
        return {"kind": "binary_markov", "q": self.q}


MarkovSource = Union[GaussMarkov, BinaryMarkov]


def source_from_dict(spec: dict) -> MarkovSource:
    try:
        kind = spec["kind"]
        if kind == "gauss_markov":
            return GaussMarkov(float(spec["a"]), float(spec.get("sigma2", 1.0)))
        if kind == "binary_markov":
            return BinaryMarkov(float(spec["q"]))
    except (KeyError, TypeError) as exc:
        raise ConfigError(f"bad source spec {spec!r}: {exc}") from exc
    raise ConfigError(f"unknown source kind {spec.get('kind')!r}")


def mutual_info(src: MarkovSource, delta):
    """Mutual information (bits) carried by a sample of age ``delta``."""
    if isinstance(src, GaussMarkov):
        return gauss_markov_mi(src.a, delta)
    return binary_markov_mi(src.q, delta)


def conditional_entropy(src: BinaryMarkov, delta):
    """H(X_t | X_{t-delta}) in bits; non-decreasing in the age."""
    if not isinstance(src, BinaryMarkov):
        raise TypeError("conditional entropy is only defined for the binary source")
    d = np.asarray(delta, dtype=float)
    if np.any(d < 0.0):
        raise DomainError("age must be non-negative")
    out = binary_entropy((1.0 - np.power(1.0 - 2.0 * src.q, d)) / 2.0)
    return out if np.ndim(out) else float(out)


def mi_penalty(src: MarkovSource):
    """Penalty p(delta) = -I(delta), turning MI maximisation into penalty minimisation."""
    from .penalty import NegMutualInfoBinary, NegMutualInfoGauss

    if isinstance(src, GaussMarkov):
        return NegMutualInfoGauss(src.a)
    return NegMutualInfoBinary(src.q)


def conditional_mi_given_service(src: MarkovSource, dist, gap: int,
                                 n_mc: int = 100_000, seed: int = 0) -> float:
    """E_Y[I(gap + Y)]: information the next sample will carry on delivery.

    ``gap`` is the time already elapsed since the previous sample was taken.
    Finite-support laws are summed exactly; other discrete laws use an
    empirical law of ``n_mc`` seeded draws.
    """
    if gap < 0:
        raise DomainError("gap must be non-negative")
    if not dist.is_discrete:
        raise DomainError("conditional MI given service needs a discrete service law")
    values, probs = dist.law(n_mc=n_mc, seed=seed)
    return float(np.dot(probs, mutual_info(src, gap + values)))

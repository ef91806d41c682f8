"""Brute-force reference optimisers for small instances.

These routines deliberately avoid the threshold machinery: they enumerate
stationary deterministic waiting maps y -> z(y) (sufficient because the
optimal wait depends on the history only through the last service time),
or scan a grid of water levels, and score each candidate by the renewal
ratio computed from plain sums of the penalty.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Dict, List, Tuple

import numpy as np

from .errors import BudgetExceededError, DomainError
from .service import DEFAULT_N_MC, ServiceDist, make_rng

ENUMERATION_BUDGET = 10_000_000
DEFAULT_Z_MAX = 50
TIE_TOL = 1e-12
MAX_REPORTED_OPTIMA = 10_000
STREAM_ORACLE = 7
_CHUNK = 1 << 18


@dataclass(frozen=True)
class WaitingMap:
    """Deterministic waiting rule on a finite support: z(support[k]) = waits[k]."""

    support: Tuple[float, ...]
    waits: Tuple[int, ...]

    def __post_init__(self):
        if len(self.support) != len(self.waits):
            raise ValueError("one wait per support point")
        if any(int(z) != z or z < 0 for z in self.waits):
            raise ValueError("waits must be non-negative integers")
        object.__setattr__(self, "support", tuple(float(y) for y in self.support))
        object.__setattr__(self, "waits", tuple(int(z) for z in self.waits))

    def __call__(self, y: float) -> int:
        return self.waits[self.support.index(float(y))]

    def as_dict(self) -> Dict[float, int]:
        return dict(zip(self.support, self.waits))


def _finite_discrete_law(dist: ServiceDist):
    sup = dist.support()
    if sup is None or not dist.is_discrete:
        raise DomainError("brute-force enumeration needs a finite-support integer law")
    return [int(v) for v in sup[0]], [float(q) for q in sup[1]]


def exact_objective(wmap, p, dist: ServiceDist) -> float:
    """sum Pr[y] Pr[y'] q(y, z(y), y') / sum Pr[y] (y + z(y)) by direct summation.

    ``wmap`` is a WaitingMap or a plain dict y -> z.
    """
    vals, probs = _finite_discrete_law(dist)
    z_of = wmap.as_dict() if isinstance(wmap, WaitingMap) else {float(k): v for k, v in wmap.items()}
    num = 0.0
    den = 0.0
    for y, py in zip(vals, probs):
        z = int(z_of[float(y)])
        den += py * (y + z)
        for yp, pyp in zip(vals, probs):
            q = sum(float(p(float(t))) for t in range(y, y + z + yp))
            num += py * pyp * q
    return num / den


def _plain_cumsum(p, top: int) -> np.ndarray:
    """csum[n] = sum_{t=1}^{n-1} p(t); ages below 1 never occur with service >= 1."""
    terms = np.asarray(p(np.arange(1, max(top, 2), dtype=float)), dtype=float)
    return np.concatenate([[0.0, 0.0], np.cumsum(terms)])


def _tables(p, vals, probs, z_max):
    """Q[k, z] = E_{Y'}[q(y_k, z, Y')] and L[k, z] = y_k + z from a plain cumsum."""
    if min(vals) < 1:
        raise DomainError("discrete service times must be at least 1")
    csum = _plain_cumsum(p, 2 * max(vals) + z_max + 1)
    zs = np.arange(z_max + 1)
    q = np.zeros((len(vals), z_max + 1))
    for k, y in enumerate(vals):
        for yp, pyp in zip(vals, probs):
            q[k] += pyp * (csum[y + zs + yp] - csum[y])
    length = np.asarray(vals, dtype=float)[:, None] + zs[None, :]
    return q, length


@dataclass(frozen=True)
class BruteForceResult:
    best: WaitingMap
    objective: float
    optimal_maps: Tuple[WaitingMap, ...]
    n_maps: int

    def __iter__(self):
        return iter((self.best, self.objective))

    def contains(self, wmap: WaitingMap) -> bool:
        return wmap.waits in {m.waits for m in self.optimal_maps}


def _check_budget(k: int, z_max: int) -> int:
    n = (z_max + 1) ** k
    if k * n > ENUMERATION_BUDGET:
        raise BudgetExceededError(f"{n} maps over {k} support points exceed the enumeration budget")
    return n


def _enumerate(k, z_max, n, fn):
    """Apply ``fn(digits)`` to all maps in lexicographic order, chunk by chunk."""
    shape = (z_max + 1,) * k
    for start in range(0, n, _CHUNK):
        idx = np.arange(start, min(n, start + _CHUNK))
        yield idx, fn(np.unravel_index(idx, shape))


def brute_force_discrete(p, dist: ServiceDist, z_max: int = DEFAULT_Z_MAX,
                         solver_max_wait: float = None) -> BruteForceResult:
    """Best deterministic waiting map over {0, ..., z_max}^support.

    Ties are broken towards the lexicographically smallest map; every map
    within a relative ``TIE_TOL`` of the optimum is reported in
    ``optimal_maps``. When ``solver_max_wait`` is given the search range must
    exceed twice that wait.
    """
    if solver_max_wait is not None and not z_max > 2 * solver_max_wait:
        raise ValueError(f"z_max={z_max} must exceed twice the solver's largest wait {solver_max_wait}")
    vals, probs = _finite_discrete_law(dist)
    k = len(vals)
    n = _check_budget(k, z_max)
    q, length = _tables(p, vals, probs, z_max)
    pr = np.asarray(probs)

    def ratio(digits):
        num = sum(pr[j] * q[j, digits[j]] for j in range(k))
        den = sum(pr[j] * length[j, digits[j]] for j in range(k))
        return num / den

    objs = np.empty(n)
    for idx, r in _enumerate(k, z_max, n, ratio):
        objs[idx] = r
    best_idx = int(np.argmin(objs))
    best = float(objs[best_idx])
    tied = np.flatnonzero(objs <= best + TIE_TOL * max(1.0, abs(best)))[:MAX_REPORTED_OPTIMA]
    shape = (z_max + 1,) * k

    def to_map(i):
        return WaitingMap(tuple(vals), tuple(int(d) for d in np.unravel_index(int(i), shape)))

    return BruteForceResult(to_map(best_idx), best, tuple(to_map(i) for i in tied), n)


def _lower_hull(points: List[Tuple[float, float]]):
    """Lower convex hull of (x, y) points sorted by x (monotone chain)."""
    hull: List[Tuple[float, float]] = []
    for pt in points:
        while len(hull) >= 2:
            (x1, y1), (x2, y2) = hull[-2], hull[-1]
            if (x2 - x1) * (pt[1] - y1) - (y2 - y1) * (pt[0] - x1) <= 0.0:
                hull.pop()
            else:
                break
        hull.append(pt)
    return hull


@dataclass(frozen=True)
class ConstrainedOracleResult:
    objective: float
    interval: float


def brute_force_constrained(p, dist: ServiceDist, f_max: float,
                            z_max: int = DEFAULT_Z_MAX) -> ConstrainedOracleResult:
    """Best per-cycle randomisation over deterministic maps with mean interval >= 1/f_max.

    Mixing maps j with weights mu_j yields the average penalty
    sum mu_j N_j / sum mu_j L_j, where N_j and L_j are a map's mean cycle
    penalty and length, so the feasible (L, N) pairs form the convex hull of
    the map points. For a fixed length the lower hull is best, and along each
    hull edge N / L is monotone, so the optimum sits at L = 1/f_max or at a
    hull vertex beyond it.
    """
    vals, probs = _finite_discrete_law(dist)
    k = len(vals)
    n = _check_budget(k, z_max)
    q, length = _tables(p, vals, probs, z_max)
    pr = np.asarray(probs)
    target = 0.0 if math.isinf(f_max) else 1.0 / f_max

    best_n: Dict[float, float] = {}

    def pairs(digits):
        num = sum(pr[j] * q[j, digits[j]] for j in range(k))
        den = sum(pr[j] * length[j, digits[j]] for j in range(k))
        return den, num

    for _, (den, num) in _enumerate(k, z_max, n, pairs):
        keys = np.round(den, 12)
        order = np.lexsort((num, keys))
        keys, num = keys[order], num[order]
        first = np.concatenate([[True], keys[1:] != keys[:-1]])
        for key, val in zip(keys[first], num[first]):
            if val < best_n.get(key, math.inf):
                best_n[key] = float(val)
    hull = _lower_hull(sorted(best_n.items()))
    if hull[-1][0] < target:
        raise ValueError("z_max too small to reach the required mean interval")
    candidates = [(y / x, x) for x, y in hull if x >= target]
    for (x1, y1), (x2, y2) in zip(hull[:-1], hull[1:]):
        if x1 <= target <= x2 and x2 > x1:
            y = y1 + (y2 - y1) * (target - x1) / (x2 - x1)
            candidates.append((y / target, target))
    obj, interval = min(candidates)
    return ConstrainedOracleResult(obj, interval)


@dataclass(frozen=True)
class GridSearchResult:
    water_level: float
    objective: float
    objectives: np.ndarray
    se: float

    def __iter__(self):
        return iter((self.water_level, self.objective))


def grid_search_water_level(p, dist: ServiceDist, w_grid, mode: str = "continuous",
                            n_mc: int = DEFAULT_N_MC, seed: int = 0) -> GridSearchResult:
    """Renewal ratio of Z = max(w - Y, 0) for every w in ``w_grid``.

    Finite-support laws are enumerated; otherwise the oracle draws its own
    (Y, Y') sample from a stream separate from the solver's pool.
    """
    w_grid = np.asarray(w_grid, dtype=float)
    if w_grid.ndim != 1 or len(w_grid) == 0 or np.any(np.diff(w_grid) < 0.0):
        raise ValueError("water-level grid must be a non-empty sorted 1-D array")
    sup = dist.support()
    if sup is not None:
        v, pr = sup
        y, yp = np.repeat(v, len(v)), np.tile(v, len(v))
        wt = np.outer(pr, pr).reshape(-1)
    else:
        rng = make_rng(seed, STREAM_ORACLE)
        y, yp = dist.sample(rng, n_mc), dist.sample(rng, n_mc)
        wt = np.full(n_mc, 1.0 / n_mc)
    discrete = mode == "discrete"
    if discrete:
        if np.min(y) < 1:
            raise DomainError("discrete service times must be at least 1")
        csum = _plain_cumsum(p, int(np.max(y) + np.max(w_grid) + np.max(yp)) + 2)
    objs = np.empty(len(w_grid))
    for i, w in enumerate(w_grid):
        z = np.maximum(w - y, 0.0)
        if discrete:
            z = np.ceil(z - 1e-12)
            cost = csum[(y + z + yp).astype(int)] - csum[y.astype(int)]
        else:
            cost = np.asarray(p.integral(y + z + yp)) - np.asarray(p.integral(y))
        objs[i] = np.dot(wt, cost) / np.dot(wt, y + z)
    j = int(np.argmin(objs))
    se = 0.0
    if sup is None:
        z = np.maximum(w_grid[j] - y, 0.0)
        cost = np.asarray(p.integral(y + z + yp)) - np.asarray(p.integral(y)) if not discrete \
            else csum[(y + np.ceil(z - 1e-12) + yp).astype(int)] - csum[y.astype(int)]
        length = y + (np.ceil(z - 1e-12) if discrete else z)
        resid = cost - objs[j] * length
        se = float(math.sqrt(np.mean(resid**2) / n_mc) / length.mean())
    return GridSearchResult(float(w_grid[j]), float(objs[j]), objs, se)

"""Choquet integrals against monotone, possibly non-additive set functions.

A set function is evaluated on sets of cloud indices. Integrals of
per-point values use the layer-cake sum over the distinct positive values,
carried out in exact rational arithmetic so additive backends reproduce the
weighted sum bit for bit.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable

import numpy as np
from scipy.spatial import cKDTree

from .content import content_greedy, content_intervals_exact, content_oracle_exact
from .errors import UndefinedDistanceError, ValidationError
from .intervals import IntervalUnion
from .metric import Ball, PointCloud

_EQ_TOL = 1e-12


@dataclass
class MonotoneSetFunction:
    """A set function on index sets of an ``n``-point cloud, with a cache.

    ``cap`` is the diameter cap of content backends (None for masses).
    """

    rule: Callable[[np.ndarray], float | Fraction]
    n: int
    name: str = "custom"
    cap: float | None = None
    additive: bool = False
    cache: dict = field(default_factory=dict, repr=False)

    def __call__(self, idx) -> Fraction:
        idx = np.unique(np.asarray(idx, dtype=np.int64))
        if idx.size and (idx[0] < 0 or idx[-1] >= self.n):
            raise ValidationError("set index out of range")
        key = idx.tobytes()
        hit = self.cache.get(key)
        if hit is None:
            hit = Fraction(0) if idx.size == 0 else Fraction(self.rule(idx))
            self.cache[key] = hit
        return hit

    def check_monotone(self, tol: float = _EQ_TOL) -> list[tuple]:
        """Pairs A within B among cached sets with value(A) > value(B)."""
        items = [(frozenset(np.frombuffer(k, dtype=np.int64).tolist()), v) for k, v in self.cache.items()]
        bad = []
        for (a, va), (b, vb) in itertools.permutations(items, 2):
            if a < b and float(va) > float(vb) + tol * max(1.0, float(vb)):
                bad.append((sorted(a), sorted(b)))
        return bad

    def check_subadditive(self, pairs, tol: float = _EQ_TOL) -> list[tuple]:
        bad = []
        for a, b in pairs:
            u = np.union1d(a, b)
            if float(self(u)) > float(self(a) + self(b)) * (1 + tol) + tol:
                bad.append((list(a), list(b)))
        return bad


def discrete_mass(cloud: PointCloud) -> MonotoneSetFunction:
    w = cloud.weights
    return MonotoneSetFunction(lambda idx: sum((Fraction(float(v)) for v in w[idx]), Fraction(0)),
                               len(cloud), "mass", None, True)


def greedy_content(cloud: PointCloud, s: float | None = None, delta: float = math.inf) -> MonotoneSetFunction:
    return MonotoneSetFunction(lambda idx: content_greedy(cloud, idx, s, delta).value, len(cloud), "greedy", delta)


def oracle_content(cloud: PointCloud, pool, s: float | None = None, delta: float = math.inf) -> MonotoneSetFunction:
    """Exact minimum over covers drawn from one fixed pool; monotone and
    subadditive because the pool does not depend on the set."""
    return MonotoneSetFunction(lambda idx: content_oracle_exact(cloud, idx, s, delta, pool).value,
                               len(cloud), "oracle", delta)


def interval_content(cloud: PointCloud, s: float = 1.0, delta: float = math.inf) -> MonotoneSetFunction:
    """Exact capped content of the union of the cells of a 1D cloud."""
    if cloud.points is None or cloud.dim != 1 or cloud.cells_lo is None:
        raise ValidationError("interval content needs a one-dimensional cloud with cells")
    lo, hi = cloud.cells_lo[:, 0], cloud.cells_hi[:, 0]

    def rule(idx):
        union = IntervalUnion(zip(lo[idx].tolist(), hi[idx].tolist()))
        return content_intervals_exact(union, None, delta, s).value

    return MonotoneSetFunction(rule, len(cloud), "interval", delta)


# ---------------------------------------------------------------- simple functions

@dataclass(frozen=True)
class SimpleFunction:
    levels: tuple
    carriers: tuple

    def __post_init__(self):
        if len(self.levels) != len(self.carriers):
            raise ValidationError("levels and carriers differ in length")
        for a in self.levels:
            if not a >= 0:
                raise ValidationError(f"levels must be nonnegative, got {a}")

    @classmethod
    def make(cls, levels, carriers) -> "SimpleFunction":
        return cls(tuple(float(a) for a in levels),
                   tuple(tuple(int(i) for i in np.unique(np.asarray(c, dtype=int))) for c in carriers))

    @classmethod
    def from_json(cls, text: str) -> "SimpleFunction":
        doc = json.loads(text)
        return cls.make(doc["levels"], doc["carriers"])

    def to_json(self) -> str:
        return json.dumps({"levels": list(self.levels), "carriers": [list(c) for c in self.carriers]})

    def values(self, n: int) -> np.ndarray:
        out = np.zeros(n)
        for a, c in zip(self.levels, self.carriers):
            if c and (min(c) < 0 or max(c) >= n):
                raise ValidationError("carrier index out of range")
            out[list(c)] += a
        return out


def _values(f, n: int) -> np.ndarray:
    if isinstance(f, SimpleFunction):
        return f.values(n)
    v = np.asarray(f, dtype=float).reshape(-1)
    if v.size != n:
        raise ValidationError(f"function has {v.size} values, expected {n}")
    if not np.all(np.isfinite(v)):
        raise ValidationError("function values must be finite")
    return v


def _layer_cake(v: np.ndarray, mu: MonotoneSetFunction) -> Fraction:
    levels = np.unique(v[v > 0])
    total, prev = Fraction(0), Fraction(0)
    for t in levels.tolist():
        t = Fraction(t)
        total += (t - prev) * mu(np.flatnonzero(v >= float(t)))
        prev = t
    return total


def choquet_integral(f, mu: MonotoneSetFunction, exact: bool = False):
    """int f dmu = int_0^inf mu({f > t}) dt, and int f+ - int f- for signed f."""
    v = _values(f, mu.n)
    val = _layer_cake(np.maximum(v, 0), mu) - _layer_cake(np.maximum(-v, 0), mu)
    return val if exact else float(val)


# ---------------------------------------------------------------- quasi-subadditivity and separated additivity

@dataclass(frozen=True)
class QuasiAddReport:
    lhs: Fraction
    rhs: Fraction
    gamma: float

    @property
    def slack(self) -> float:
        return float(self.rhs - self.lhs)

    @property
    def ok(self) -> bool:
        return self.lhs <= self.rhs


def check_quasi_subadditivity(f, g, mu: MonotoneSetFunction, gamma: float) -> QuasiAddReport:
    """int (f+g) <= int f / gamma + int g / (1 - gamma), exactly."""
    if not 0 < gamma < 1:
        raise ValidationError(f"gamma must lie in (0, 1), got {gamma}")
    fv, gv = _values(f, mu.n), _values(g, mu.n)
    if np.any(fv < 0) or np.any(gv < 0):
        raise ValidationError("f and g must be nonnegative")
    G = Fraction(gamma)
    # f + g in floating point may round, so the sum is formed exactly
    lhs = _exact_sum_integral(fv, gv, mu)
    rhs = _layer_cake(fv, mu) / G + _layer_cake(gv, mu) / (1 - G)
    return QuasiAddReport(lhs, rhs, float(gamma))


def _exact_sum_integral(fv, gv, mu) -> Fraction:
    vals = [Fraction(a) + Fraction(b) for a, b in zip(fv.tolist(), gv.tolist())]
    levels = sorted({x for x in vals if x > 0})
    total, prev = Fraction(0), Fraction(0)
    for t in levels:
        total += (t - prev) * mu(np.array([i for i, x in enumerate(vals) if x >= t], dtype=np.int64))
        prev = t
    return total


def carrier_distance(cloud: PointCloud, a, b) -> float:
    """Distance between the unions of the cells (or points) of two carriers."""
    a, b = np.asarray(a, dtype=int), np.asarray(b, dtype=int)
    if cloud.points is None:
        return float(cloud.matrix[np.ix_(a, b)].min())
    lo, hi = cloud.box_lo, cloud.box_hi
    gap = np.maximum(np.maximum(lo[b][None, :, :] - hi[a][:, None, :], lo[a][:, None, :] - hi[b][None, :, :]), 0.0)
    return float(np.sqrt((gap * gap).sum(axis=2)).min())


@dataclass(frozen=True)
class AdditivityReport:
    integral: float
    weighted: float
    subsets_checked: int
    max_defect: float

    @property
    def ok(self) -> bool:
        return abs(self.integral - self.weighted) <= _EQ_TOL * max(1.0, abs(self.weighted)) \
            and self.max_defect <= _EQ_TOL


def check_separated_additivity(f: SimpleFunction, mu: MonotoneSetFunction, cloud: PointCloud,
                               rho: float) -> AdditivityReport:
    """For carriers pairwise at least 2 rho apart and mu capped at rho:
    int f dmu = sum a_j mu(A_j), and mu is additive on every sub-collection."""
    if mu.cap is not None and not mu.cap <= rho:
        raise ValidationError(f"set function cap {mu.cap} exceeds rho = {rho}")
    cars = [np.asarray(c, dtype=int) for c in f.carriers]
    for i, j in itertools.combinations(range(len(cars)), 2):
        d = carrier_distance(cloud, cars[i], cars[j])
        # decimal inputs such as 0.6 - 0.2 land one ulp short of 0.4
        if not d >= 2 * rho * (1 - _EQ_TOL):
            raise ValidationError(f"carriers {i} and {j} are {d:.6g} apart, below 2 rho = {2 * rho:.6g}")
    integral = choquet_integral(f, mu, exact=True)
    weighted = sum((Fraction(a) * mu(c) for a, c in zip(f.levels, cars)), Fraction(0))
    k = len(cars)
    subsets = (itertools.chain.from_iterable(itertools.combinations(range(k), r) for r in range(2, k + 1))
               if k <= 10 else itertools.combinations(range(k), 2))
    worst, count = 0.0, 0
    for sub in subsets:
        whole = mu(np.concatenate([cars[t] for t in sub]))
        parts = sum((mu(cars[t]) for t in sub), Fraction(0))
        worst = max(worst, abs(float(whole - parts)) / max(1.0, float(parts)))
        count += 1
    return AdditivityReport(float(integral), float(weighted), count, worst)


# ---------------------------------------------------------------- supports

def _support(x) -> np.ndarray:
    if isinstance(x, PointCloud):
        if x.points is None:
            raise ValidationError("support distance needs coordinates")
        return x.points[x.weights > 0]
    pts = np.asarray(x, dtype=float)
    return pts[:, None] if pts.ndim == 1 else pts


def support_distance(mu, nu, B: Ball) -> float:
    """sup_{B cap supp nu} dist(., supp mu) + sup_{B cap supp mu} dist(., supp nu)."""
    P, Q = _support(mu), _support(nu)
    c = np.asarray(B.center, dtype=float).reshape(-1)
    if P.shape[1] != c.size or Q.shape[1] != c.size:
        raise ValidationError("supports and ball live in different dimensions")
    inP = P[np.sqrt(((P - c) ** 2).sum(axis=1)) <= B.radius]
    inQ = Q[np.sqrt(((Q - c) ** 2).sum(axis=1)) <= B.radius]
    if inP.shape[0] == 0 or inQ.shape[0] == 0:
        raise UndefinedDistanceError("a support misses the ball")
    a = float(cKDTree(P).query(inQ)[0].max())
    b = float(cKDTree(Q).query(inP)[0].max())
    return a + b

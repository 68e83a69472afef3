"""Hausdorff content estimates with certified two-sided bounds.

The set being measured is the union of the generator cells of a region,
optionally intersected with a closed ball (a *window*). Upper bounds come
from explicit covers of the cells, lower bounds from the mass distribution
principle: if mu(U) <= C diam(U)^s for every U of diameter at most delta,
then H^s_delta(E) >= mu(E) / C.
"""

from __future__ import annotations

import bisect
import heapq
import itertools
import math
from collections import OrderedDict, deque
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np
from scipy.spatial import cKDTree

from .errors import InfeasibleCoverError, PoolTooLargeError, ValidationError
from .intervals import IntervalUnion, as_fraction, is_dyadic
from .metric import Ball, PointCloud

METHODS = ("greedy", "oracle_exact", "interval_exact", "mass_lower_bound")

# relative slack absorbing float rounding in mass / C against sums of diam^s
_LOWER_SLACK = 1e-12
_ORACLE_POOL_MAX = 24
_ORACLE_REGION_MAX = 16


@dataclass(frozen=True)
class ContentEstimate:
    value: float
    s: float
    delta: float
    method: str
    lower: float
    upper: float
    saturated: bool = False
    cover: tuple | None = field(default=None, repr=False, compare=False)

    def to_dict(self) -> dict:
        out = {
            "value": float(self.value), "s": self.s,
            "delta": None if math.isinf(self.delta) else float(self.delta),
            "method": self.method, "lower": float(self.lower),
            "upper": None if math.isinf(self.upper) else float(self.upper),
        }
        if isinstance(self.value, Fraction):
            out["exact"] = f"{self.value.numerator}/{self.value.denominator}"
        if self.saturated:
            out["saturated"] = True
        return out


@dataclass(frozen=True)
class CoverCandidatePool:
    members: tuple
    diameters: np.ndarray
    delta: float = math.inf

    def __post_init__(self):
        if len(self.members) != len(self.diameters):
            raise ValidationError("pool members and diameters differ in length")
        for i, (m, d) in enumerate(zip(self.members, self.diameters)):
            if len(m) == 0:
                raise ValidationError(f"pool candidate {i} is empty")
            if d > self.delta:
                raise ValidationError(f"pool candidate {i} has diameter {d} above cap {self.delta}")

    def __len__(self) -> int:
        return len(self.members)


# ---------------------------------------------------------------- logging

@dataclass(frozen=True)
class LogRecord:
    cloud: int
    region: tuple
    s: float
    delta: float
    value: float
    lower: float
    upper: float
    method: str


_LOG: list[LogRecord] = []
_LOG_ENABLED = [True]


def estimate_log() -> list[LogRecord]:
    return _LOG


def clear_estimate_log() -> None:
    _LOG.clear()


def set_logging(enabled: bool) -> None:
    _LOG_ENABLED[0] = bool(enabled)


def _record(cloud_uid: int, region: tuple, est: ContentEstimate) -> ContentEstimate:
    if _LOG_ENABLED[0]:
        _LOG.append(LogRecord(cloud_uid, region, est.s, est.delta, float(est.value),
                              float(est.lower), float(est.upper), est.method))
    return est


_UIDS = itertools.count()


def cloud_uid(cloud: PointCloud) -> int:
    uid = cloud.__dict__.get("_gmtk_uid")
    if uid is None:
        uid = next(_UIDS)
        cloud.__dict__["_gmtk_uid"] = uid
    return uid


def is_delta_monotone(estimates, tol: float = 1e-12) -> bool:
    """H^s_delta is non-increasing in delta: for estimates of one set sorted
    by delta, every value is at most the value at any smaller cap."""
    ests = sorted(estimates, key=lambda e: e.delta)
    best = math.inf
    for e in ests:
        if e.value > best + tol:
            return False
        best = min(best, e.value)
    return True


def _exact(method: str) -> bool:
    return method in ("oracle_exact", "interval_exact")


def check_log_monotonicity(records=None, tol: float = 1e-12) -> list[str]:
    """Scan logged estimates for violations of delta- and set-monotonicity.

    Exact methods must satisfy the value inequalities; estimates with gaps
    between their bounds must at least have compatible bounds
    (lower of the smaller problem <= upper of the larger)."""
    records = _LOG if records is None else records
    problems: list[str] = []
    by_set: dict = {}
    for r in records:
        by_set.setdefault((r.cloud, r.region, r.s, r.method), []).append(r)
    for key, group in by_set.items():
        group.sort(key=lambda r: r.delta)
        # larger delta must not give a larger value
        run_min_val, run_min_upper = math.inf, math.inf
        for r in group:
            if _exact(r.method) and r.value > run_min_val + tol * max(1.0, abs(run_min_val)):
                problems.append(f"delta-monotonicity: {key} at delta={r.delta}")
            if r.lower > run_min_upper + tol * max(1.0, run_min_upper):
                problems.append(f"delta-bounds: {key} at delta={r.delta}")
            run_min_val = min(run_min_val, r.value)
            run_min_upper = min(run_min_upper, r.upper)
    # set monotonicity: ball windows by containment, index sets by inclusion
    by_cap: dict = {}
    for r in records:
        if r.region[0] == "ball" and len(r.region) > 3:
            continue  # ball windows restricted to a sub-region
        by_cap.setdefault((r.cloud, r.s, r.delta, r.method, r.region[0]), []).append(r)
    for key, group in by_cap.items():
        if len(group) < 2:
            continue
        kind = key[4]
        if kind == "ball":
            problems.extend(_ball_set_check(key, group, tol))
        elif kind == "idx":
            problems.extend(_index_set_check(key, group, tol))
    return problems


def _ball_set_check(key, group, tol) -> list[str]:
    group = list({r.region: r for r in group}.values())
    centers = np.array([r.region[1] for r in group], dtype=float)
    radii = np.array([r.region[2] for r in group], dtype=float)
    val = np.array([r.value for r in group])
    low = np.array([r.lower for r in group])
    up = np.array([r.upper for r in group])
    exact = _exact(key[3])
    out = []
    for start in range(0, len(group), 1024):
        sl = slice(start, start + 1024)
        d = np.sqrt(((centers[sl, None, :] - centers[None, :, :]) ** 2).sum(axis=2))
        inside = d + radii[sl, None] <= radii[None, :]  # ball i within ball j
        np.fill_diagonal(inside[:, start:start + 1024], False)
        small = val[sl, None] if exact else low[sl, None]
        big = val[None, :] if exact else up[None, :]
        bad = inside & (small > big + tol * np.maximum(1.0, np.abs(big)))
        for i, j in np.argwhere(bad)[:5]:
            out.append(f"set-monotonicity: {key} ball {group[start + i].region} in {group[j].region}")
    return out


def _index_set_check(key, group, tol) -> list[str]:
    group = list({r.region: r for r in group}.values())
    if len(group) > 2000:
        group = group[:2000]
    sets = [frozenset(np.frombuffer(r.region[1], dtype=np.int64).tolist()) for r in group]
    exact = _exact(key[3])
    out = []
    for a, ra in enumerate(group):
        for b, rb in enumerate(group):
            if a != b and sets[a] <= sets[b]:
                small = ra.value if exact else ra.lower
                big = rb.value if exact else rb.upper
                if small > big + tol * max(1.0, abs(big)):
                    out.append(f"set-monotonicity: {key} index sets {a} in {b}")
    return out


# ---------------------------------------------------------------- regions

@dataclass
class _Region:
    idx: np.ndarray          # cloud indices of cells meeting the measured set
    lo: np.ndarray | None    # cells clipped to the window's bounding box
    hi: np.ndarray | None
    inner: np.ndarray        # cells certainly contained in the measured set
    key: tuple


def _region(cloud: PointCloud, region=None, window: Ball | None = None) -> _Region:
    if window is None:
        if region is None:
            idx = np.arange(len(cloud))
        else:
            idx = np.unique(np.asarray(region, dtype=np.int64))
        if idx.size and (idx[0] < 0 or idx[-1] >= len(cloud)):
            raise ValidationError("region index out of range")
        lo = hi = None
        if cloud.points is not None:
            lo, hi = cloud.box_lo[idx], cloud.box_hi[idx]
        return _Region(idx, lo, hi, idx, ("idx", idx.astype(np.int64).tobytes()))
    r = float(window.radius)
    if cloud.points is None:
        idx = cloud.within(window.center, r)
        key = ("ball", (float(window.center),), r)
        if region is not None:
            idx = np.intersect1d(idx, np.asarray(region, dtype=int))
            key = key + (np.asarray(idx, np.int64).tobytes(),)
        return _Region(idx, None, None, idx, key)
    c = cloud.center_coords(window.center)
    reach = cloud.max_cell_reach
    cand = np.asarray(cloud.tree.query_ball_point(c, (r + reach) * (1 + 1e-9) + 1e-300), dtype=int)
    cand.sort()
    lo, hi = cloud.box_lo[cand], cloud.box_hi[cand]
    gap = np.maximum(np.maximum(lo - c, c - hi), 0.0)
    meet = np.sqrt((gap * gap).sum(axis=1)) <= r
    far = np.maximum(np.abs(lo - c), np.abs(hi - c))
    inside = np.sqrt((far * far).sum(axis=1)) <= r
    if region is not None:
        keep = np.isin(cand, np.asarray(region, dtype=int))
        meet &= keep
        inside &= keep
    idx = cand[meet]
    inner = cand[inside & meet]
    lo = np.maximum(lo[meet], c - r)
    hi = np.minimum(hi[meet], c + r)
    key = ("ball", tuple(float(v) for v in c), r)
    if region is not None:
        key = key + (np.asarray(idx, np.int64).tobytes(),)
    return _Region(idx, lo, hi, inner, key)


def _lower_bound(cloud: PointCloud, reg: _Region, delta: float) -> float:
    C = cloud.content_constant(delta)
    if C is None or cloud.points is None or reg.inner.size == 0:
        return 0.0
    return cloud.mass(reg.inner) / C * (1 - _LOWER_SLACK)


# ---------------------------------------------------------------- pools

def _cost_class(c: np.ndarray) -> np.ndarray:
    """Round costs up to the grid 2^{k/2}; zero stays zero."""
    out = np.zeros_like(c, dtype=float)
    pos = c > 0
    out[pos] = 2.0 ** (np.ceil(2 * np.log2(c[pos]) - 1e-12) / 2)
    # guard against the log rounding the class below the cost
    low = out < c
    out[low] *= math.sqrt(2)
    return out


@dataclass
class _Pool:
    offsets: np.ndarray      # CSR offsets into flat
    flat: np.ndarray         # local element indices
    cost: np.ndarray
    qclass: np.ndarray
    atom: np.ndarray         # boolean: single-element candidate
    m: int
    g_cache: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return int(self.cost.size)

    def members(self, j: int) -> np.ndarray:
        return self.flat[self.offsets[j]:self.offsets[j + 1]]


_POOL_CACHE: "OrderedDict" = OrderedDict()
_POOL_CACHE_MAX = 2048


def _group_cost(lo, hi, order, starts) -> np.ndarray:
    glo = np.minimum.reduceat(lo[order], starts, axis=0)
    ghi = np.maximum.reduceat(hi[order], starts, axis=0)
    return np.sqrt(((ghi - glo) ** 2).sum(axis=1))


def _build_pool(cloud: PointCloud, reg: _Region) -> _Pool:
    key = (cloud_uid(cloud), reg.key)
    hit = _POOL_CACHE.get(key)
    if hit is not None:
        _POOL_CACHE.move_to_end(key)
        return hit
    pool = _make_pool(cloud, reg)
    _POOL_CACHE[key] = pool
    if len(_POOL_CACHE) > _POOL_CACHE_MAX:
        _POOL_CACHE.popitem(last=False)
    return pool


def _make_pool(cloud: PointCloud, reg: _Region) -> _Pool:
    m = reg.idx.size
    groups: dict[bytes, int] = {}
    mem: list[np.ndarray] = []
    cost: list[float] = []

    def add(members: np.ndarray, c: float) -> None:
        k = members.tobytes()
        j = groups.get(k)
        if j is None:
            groups[k] = len(mem)
            mem.append(members)
            cost.append(c)
        elif c < cost[j]:
            cost[j] = c

    if cloud.points is None:
        D = cloud.pairwise(reg.idx, reg.idx) if m else np.zeros((0, 0))

        def exact_cost(ms):
            return float(D[np.ix_(ms, ms)].max()) if ms.size > 1 else 0.0

        for i in range(m):
            add(np.array([i], dtype=np.int64), 0.0)
        if m:
            add(np.arange(m, dtype=np.int64), exact_cost(np.arange(m)))
            ext = float(D.max())
            if ext > 0:
                pos = D[D > 0]
                k0, k1 = math.floor(-math.log2(ext)), math.ceil(-math.log2(pos.min())) + 1
                for k in range(k0, k1 + 1):
                    r = 2.0**-k
                    centers = _local_net(lambda i: np.flatnonzero(D[i] < r / 2), m)
                    for x in centers:
                        ms = np.flatnonzero(D[x] <= r).astype(np.int64)
                        add(ms, exact_cost(ms))
    else:
        lo, hi = reg.lo, reg.hi
        atom_cost = np.sqrt(((hi - lo) ** 2).sum(axis=1))
        for i in range(m):
            add(np.array([i], dtype=np.int64), float(atom_cost[i]))
        if m:
            allm = np.arange(m, dtype=np.int64)
            add(allm, float(_group_cost(lo, hi, allm, np.array([0]))[0]))
            rep = (lo + hi) / 2
            ext = float((hi.max(axis=0) - lo.min(axis=0)).max())
            if ext > 0 and m > 1:
                k0 = math.floor(-math.log2(ext))
                tree = cKDTree(rep)
                for k in range(k0, k0 + 64):
                    done_box = _add_boxes(rep, lo, hi, k, add)
                    done_ball = _add_balls(rep, lo, hi, tree, 2.0**-k, add, m)
                    if done_box and done_ball:
                        break
    offsets = np.zeros(len(mem) + 1, dtype=np.int64)
    offsets[1:] = np.cumsum([x.size for x in mem])
    flat = np.concatenate(mem) if mem else np.zeros(0, dtype=np.int64)
    cost_a = np.array(cost, dtype=float)
    atom = np.array([x.size == 1 for x in mem], dtype=bool)
    return _Pool(offsets, flat, cost_a, _cost_class(cost_a), atom, m)


def _add_boxes(rep, lo, hi, k, add) -> bool:
    keys = np.floor(rep * 2.0**k).astype(np.int64)
    _, inv = np.unique(keys, axis=0, return_inverse=True)
    inv = inv.reshape(-1)
    order = np.argsort(inv, kind="stable")
    starts = np.flatnonzero(np.r_[True, np.diff(inv[order]) != 0])
    costs = _group_cost(lo, hi, order, starts)
    ends = np.r_[starts[1:], order.size]
    for a, b, c in zip(starts, ends, costs):
        add(np.sort(order[a:b]).astype(np.int64), float(c))
    return starts.size == order.size


def _local_net(neighbors, m: int) -> list[int]:
    blocked = np.zeros(m, dtype=bool)
    centers = []
    for i in range(m):
        if not blocked[i]:
            centers.append(i)
            blocked[neighbors(i)] = True
    return centers


def _add_balls(rep, lo, hi, tree, r, add, m) -> bool:
    centers = _local_net(lambda i: tree.query_ball_point(rep[i], r / 2 * (1 - 1e-12)), m)
    singletons = True
    for x in centers:
        ms = np.array(sorted(tree.query_ball_point(rep[x], r)), dtype=np.int64)
        if ms.size > 1:
            singletons = False
        c = _group_cost(lo, hi, ms, np.array([0]))[0]
        add(ms, float(c))
    return singletons


# ---------------------------------------------------------------- greedy

def _powers(cost: np.ndarray, s: float) -> np.ndarray:
    return np.power(cost, s)


def _greedy(pool: _Pool, weights: np.ndarray, s: float, q: float) -> tuple[float, list[int]]:
    """Weighted greedy set cover with candidates of class <= q plus atoms."""
    key = (s, q)
    hit = pool.g_cache.get(key)
    if hit is not None:
        return hit
    allowed = np.flatnonzero((pool.qclass <= q) | pool.atom)
    pc = _powers(pool.cost, s)
    covered = np.zeros(pool.m, dtype=bool)
    chosen: list[int] = []
    w = weights

    def gain(j):
        ms = pool.members(j)
        return float(w[ms][~covered[ms]].sum())

    free = allowed[pc[allowed] == 0]
    for j in free:
        ms = pool.members(j)
        if not covered[ms].all():
            covered[ms] = True
            chosen.append(int(j))
    # initial gains in one pass over the flat member array
    wf = np.where(covered[pool.flat], 0.0, w[pool.flat])
    sizes = np.diff(pool.offsets)
    nz = sizes > 0
    gains = np.zeros(len(pool))
    gains[nz] = np.add.reduceat(wf, pool.offsets[:-1][nz])
    live = allowed[(pc[allowed] > 0) & (gains[allowed] > 0)]
    heap = list(zip((-gains[live] / pc[live]).tolist(), live.tolist()))
    heapq.heapify(heap)
    todo = int(np.count_nonzero(~covered & (w > 0)))
    while heap and todo:
        neg, j = heapq.heappop(heap)
        g = gain(j)
        if g <= 0:
            continue
        score = g / pc[j]
        if score < -neg * (1 - 1e-12):
            heapq.heappush(heap, (-score, j))
            continue
        ms = pool.members(j)
        todo -= int(np.count_nonzero(~covered[ms] & (w[ms] > 0)))
        covered[ms] = True
        chosen.append(j)
    # zero-mass leftovers take their cheapest atom
    if not covered.all():
        atoms = np.flatnonzero(pool.atom)
        owner = pool.flat[pool.offsets[atoms]]
        for e in np.flatnonzero(~covered):
            j = int(atoms[owner == e][0])
            chosen.append(j)
            covered[e] = True
    chosen = _prune(pool, chosen, pc)
    val = math.fsum(pc[chosen].tolist())
    out = (val, chosen)
    pool.g_cache[key] = out
    return out


def _prune(pool: _Pool, chosen: list[int], pc: np.ndarray) -> list[int]:
    count = np.zeros(pool.m, dtype=np.int64)
    for j in chosen:
        count[pool.members(j)] += 1
    keep = set(chosen)
    for j in sorted(chosen, key=lambda j: (-pc[j], j)):
        ms = pool.members(j)
        if np.all(count[ms] >= 2):
            count[ms] -= 1
            keep.discard(j)
    return sorted(keep)


def _greedy_value(cloud: PointCloud, reg: _Region, s: float, delta: float):
    pool = _build_pool(cloud, reg)
    w = cloud.weights[reg.idx]
    if not np.any(w > 0):
        w = np.ones_like(w)
    classes = np.unique(pool.qclass[~pool.atom])
    best_val, best_cover = _greedy(pool, w, s, -1.0)  # atoms only
    for q in classes[classes <= delta]:
        val, cover = _greedy(pool, w, s, float(q))
        if val < best_val:
            best_val, best_cover = val, cover
    return pool, best_val, best_cover


def content_greedy(cloud: PointCloud, region=None, s: float | None = None, delta: float = math.inf,
                   *, window: Ball | None = None, keep_cover: bool = False) -> ContentEstimate:
    """Greedy upper bound on H^s_delta of the region with a mass lower bound.

    ``region`` is a list of cloud indices (the set is the union of their
    cells); ``window`` intersects the set with a closed ball. The value is
    the cheapest of the greedy covers restricted to each cost class up to
    delta, which makes it exactly non-increasing in delta. Cells larger
    than delta are still used as atoms; the estimate is then flagged
    saturated.
    """
    s = cloud.s if s is None else float(s)
    delta = float(delta)
    if not delta > 0:
        raise ValidationError(f"delta must be positive, got {delta}")
    reg = _region(cloud, region, window)
    uid = cloud_uid(cloud)
    if reg.idx.size == 0:
        return _record(uid, reg.key, ContentEstimate(0.0, s, delta, "greedy", 0.0, 0.0))
    pool, val, cover = _greedy_value(cloud, reg, s, delta)
    saturated = bool(np.any(pool.cost[pool.atom] > delta))
    eff = max(delta, float(pool.cost[pool.atom].max())) if saturated else delta
    lower = min(_lower_bound(cloud, reg, eff), val)
    cov = None
    if keep_cover:
        cov = tuple((reg.idx[pool.members(j)], float(pool.cost[j])) for j in cover)
    est = ContentEstimate(val, s, delta, "greedy", lower, val, saturated, cov)
    return _record(uid, reg.key, est)


def build_cover_pool(cloud: PointCloud, region=None, delta: float = math.inf,
                     *, window: Ball | None = None) -> CoverCandidatePool:
    """The candidate pool the greedy estimator searches at cap ``delta``.

    Atoms stay in the pool even when they exceed the cap; the pool's own
    cap is then raised to the largest atom.
    """
    reg = _region(cloud, region, window)
    pool = _build_pool(cloud, reg)
    ok = np.flatnonzero((pool.qclass <= delta) | pool.atom)
    members = tuple(reg.idx[pool.members(j)] for j in ok)
    diam = pool.cost[ok].copy()
    cap = max(float(delta), float(diam.max(initial=0.0)))
    return CoverCandidatePool(members, diam, cap)


# ---------------------------------------------------------------- oracle

def content_oracle_exact(cloud: PointCloud, region, s: float | None, delta: float,
                         pool: CoverCandidatePool, *, window: Ball | None = None) -> ContentEstimate:
    """Exact minimum of sum diam^s over sub-pools covering the region.

    Branches on the lowest uncovered point and memoizes on the uncovered
    set, which is an exhaustive search over irredundant covers.
    """
    s = cloud.s if s is None else float(s)
    reg = _region(cloud, region, window)
    uid = cloud_uid(cloud)
    m = reg.idx.size
    if m == 0:
        return _record(uid, reg.key, ContentEstimate(0.0, s, delta, "oracle_exact", 0.0, 0.0))
    if len(pool) > _ORACLE_POOL_MAX and m > _ORACLE_REGION_MAX:
        raise PoolTooLargeError(
            f"pool of {len(pool)} candidates over {m} points exceeds the oracle limits "
            f"({_ORACLE_POOL_MAX} candidates or {_ORACLE_REGION_MAX} points)")
    pos = {int(v): i for i, v in enumerate(reg.idx)}
    best_for_mask: dict[int, float] = {}
    for ms, d in zip(pool.members, pool.diameters):
        if d > delta and len(ms) > 1:
            continue  # atoms stay admissible, as in the greedy estimator
        mask = 0
        for v in np.asarray(ms, dtype=int):
            i = pos.get(int(v))
            if i is not None:
                mask |= 1 << i
        if mask:
            c = float(d) ** s
            if c < best_for_mask.get(mask, math.inf):
                best_for_mask[mask] = c
    full = (1 << m) - 1
    union = 0
    for mask in best_for_mask:
        union |= mask
    if union != full:
        missing = [int(reg.idx[i]) for i in range(m) if not union >> i & 1]
        raise InfeasibleCoverError(f"pool does not cover region points {missing[:5]}")
    cands = sorted(best_for_mask.items(), key=lambda t: (t[1], t[0]))
    by_elem: list[list[tuple[int, float]]] = [[] for _ in range(m)]
    for mask, c in cands:
        for i in range(m):
            if mask >> i & 1:
                by_elem[i].append((mask, c))
    memo: dict[int, tuple[float, int]] = {0: (0.0, 0)}

    def solve(unc: int) -> float:
        hit = memo.get(unc)
        if hit is not None:
            return hit[0]
        e = (unc & -unc).bit_length() - 1
        best, pick = math.inf, 0
        for mask, c in by_elem[e]:
            if c >= best:
                break
            v = c + solve(unc & ~mask)
            if v < best:
                best, pick = v, mask
        memo[unc] = (best, pick)
        return best

    import sys
    limit = sys.getrecursionlimit()
    sys.setrecursionlimit(max(limit, 4 * m + 100))
    try:
        solve(full)
    finally:
        sys.setrecursionlimit(limit)
    chosen, unc = [], full
    while unc:
        mask = memo[unc][1]
        chosen.append(best_for_mask[mask])
        unc &= ~mask
    val = math.fsum(chosen)
    return _record(uid, reg.key, ContentEstimate(val, s, delta, "oracle_exact", val, val))


def dyadic_interval_pool(cloud: PointCloud, max_level: int, min_level: int = 0,
                         lo: float = 0.0) -> CoverCandidatePool:
    """All dyadic subintervals of [lo, lo+1] of length >= 2^-max_level that
    contain cloud points, with their full length as diameter."""
    if cloud.points is None or cloud.dim != 1:
        raise ValidationError("dyadic interval pools need a one-dimensional cloud")
    x = cloud.points[:, 0] - lo
    members, diam = [], []
    for k in range(min_level, max_level + 1):
        for j in range(2**k):
            a, b = j / 2**k, (j + 1) / 2**k
            ms = np.flatnonzero((x >= a) & (x <= b))
            if ms.size:
                members.append(ms)
                diam.append(1.0 / 2**k)
    return CoverCandidatePool(tuple(members), np.array(diam))


# ---------------------------------------------------------------- exact 1D

def _window_interval(window) -> tuple[Fraction, Fraction] | None:
    if window is None:
        return None
    if isinstance(window, Ball):
        c = window.center
        if isinstance(c, (int, np.integer)):
            raise ValidationError("interval windows need a coordinate center")
        c = as_fraction(float(np.asarray(c, dtype=float).reshape(-1)[0]) if not isinstance(c, (Fraction, str)) else c)
        r = as_fraction(window.radius)
        return c - r, c + r
    a, b = window
    return as_fraction(a), as_fraction(b)


def content_intervals_exact(union: IntervalUnion, window=None, delta=math.inf,
                            s: float = 1.0) -> ContentEstimate:
    """Exact H^1_delta of a dyadic interval union clipped to a window.

    Consecutive intervals may share one cover interval when their hull fits
    under delta; a long interval is cut into pieces of total length equal
    to its own. The optimal grouping is a dynamic program over the gap
    sequence, run in integer arithmetic over a common power-of-two
    denominator.
    """
    if s != 1:
        raise ValidationError("the exact interval solver handles s = 1 only")
    if not union.is_dyadic():
        raise ValidationError("interval endpoints must be dyadic rationals")
    delta_f = float(delta)
    if not delta_f > 0:
        raise ValidationError(f"delta must be positive, got {delta}")
    den, lo, hi = union.int_form()
    win = _window_interval(window)
    if win is not None:
        a, b = win
        if not (is_dyadic(a) and is_dyadic(b)):
            raise ValidationError("window endpoints must be dyadic rationals")
        big = max(den, a.denominator, b.denominator)
        f = big // den
        ai, bi = int(a * big), int(b * big)
        i = max(0, bisect.bisect_right(hi, ai // f) - 1)
        j = bisect.bisect_right(lo, -(-bi // f))
        lo = [max(x * f, ai) for x in lo[i:j]]
        hi = [min(x * f, bi) for x in hi[i:j]]
        keep = [k for k in range(len(lo)) if lo[k] <= hi[k]]
        lo, hi = [lo[k] for k in keep], [hi[k] for k in keep]
        den = big
    cap = None if math.isinf(delta_f) else as_fraction(delta) * den
    val = Fraction(_gap_dp(lo, hi, cap), den)
    key = ("ival", union.format()) if win is None else ("ball", (float((win[0] + win[1]) / 2),), float((win[1] - win[0]) / 2))
    est = ContentEstimate(val, 1.0, delta_f, "interval_exact", val, val)
    return _record(_union_uid(union), key, est)


def _union_uid(union: IntervalUnion) -> int:
    if union.uid is None:
        union.uid = next(_UIDS)
    return union.uid


def _gap_dp(lo: list[int], hi: list[int], cap) -> int:
    """Cheapest cover of sorted disjoint intervals [lo_i, hi_i] by pieces of
    length <= cap, where a piece may span the gaps between consecutive
    intervals. best[i+1] = min(best[i] + len_i, min_j best[j] + hi_i - lo_j)
    over groups j..i whose hull fits under the cap; the inner minimum is a
    sliding-window minimum kept in a monotone deque."""
    best = [0] * (len(lo) + 1)
    dq: deque = deque()
    for i in range(len(lo)):
        v = best[i] - lo[i]
        while dq and dq[-1][0] >= v:
            dq.pop()
        dq.append((v, i))
        while cap is not None and dq and hi[i] - lo[dq[0][1]] > cap:
            dq.popleft()
        single = best[i] + (hi[i] - lo[i])
        grouped = dq[0][0] + hi[i] if dq else single
        best[i + 1] = min(single, grouped)
    return best[-1]


# ---------------------------------------------------------------- helpers

def content_mass_lower(cloud: PointCloud, region=None, s: float | None = None, delta: float = math.inf,
                       *, window: Ball | None = None) -> ContentEstimate:
    """Mass distribution lower bound only; the upper bound is left open."""
    s = cloud.s if s is None else float(s)
    reg = _region(cloud, region, window)
    low = _lower_bound(cloud, reg, float(delta))
    est = ContentEstimate(low, s, float(delta), "mass_lower_bound", low, math.inf)
    return _record(cloud_uid(cloud), reg.key, est)


def content_bounds_quick(cloud: PointCloud, region=None, s: float | None = None, delta: float = math.inf,
                         *, window: Ball | None = None) -> tuple[float, float]:
    """Cheap (lower, upper): mass bound and the better of the atom cover and
    the one-piece hull cover (when the hull fits under delta)."""
    s = cloud.s if s is None else float(s)
    reg = _region(cloud, region, window)
    if reg.idx.size == 0:
        return 0.0, 0.0
    if cloud.points is None:
        up = 0.0 if s > 0 else float(reg.idx.size)
        return 0.0, up
    atoms = np.sqrt(((reg.hi - reg.lo) ** 2).sum(axis=1))
    up = math.fsum(np.power(atoms, s).tolist())
    hull = float(np.sqrt(((reg.hi.max(axis=0) - reg.lo.min(axis=0)) ** 2).sum()))
    if hull <= delta:
        up = min(up, hull**s)
    eff = max(delta, float(atoms.max()))
    return min(_lower_bound(cloud, reg, eff), up), up


def density_ratio(cloud: PointCloud, ball: Ball, s: float | None = None, rho: float = 1.0) -> float:
    """H^s_{rho r}(X cap B) / (2r)^s with the greedy estimator."""
    if not 0 < rho <= 1:
        raise ValidationError(f"rho must lie in (0, 1], got {rho}")
    s = cloud.s if s is None else float(s)
    est = content_greedy(cloud, None, s, rho * ball.radius, window=ball)
    return float(est.value) / (2 * ball.radius) ** s

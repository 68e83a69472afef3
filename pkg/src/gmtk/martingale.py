"""Weight martingales on high-content cubes.

For a family of Schul cubes the high-content cubes are those whose
certified content lower bound exceeds (1 + eps/4) diam(Q)^s. Each such Q
carries stopping layers Stop_k(Q) and a sequence of piecewise constant
weights w_Q^k whose integrals all equal diam(Q)^s while the pointwise
values decay like alpha^-k, alpha = 1 + eps/4. Summing the limits over
all high-content cubes bounds their packing sum by alpha/(alpha-1) mu(X).
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field

import numpy as np

from .carleson import ball_content_lower
from .cubes import CubeTree, ThinnedFamilies, build_family_cubes, select_J
from .errors import HypothesisError, InvariantError, ValidationError
from .metric import PointCloud

_REL = 1e-9
_PTWISE_SLACK = 1e-12


def alpha_of(epsilon: float) -> float:
    return 1.0 + epsilon / 4.0


def series_constant(alpha: float) -> float:
    """sum_{k >= 0} alpha^-k = alpha / (alpha - 1)."""
    return alpha / (alpha - 1.0)


# ---------------------------------------------------------------- selection

@dataclass(frozen=True)
class HighContent:
    ids: frozenset
    lower: dict              # cube id -> certified content lower bound
    threshold: dict          # cube id -> (1 + eps/4) diam^s
    alpha: float
    s: float
    # cube id -> canonical id, for cubes repeating a (level, members) pair
    duplicates: dict = field(default_factory=dict)

    def __contains__(self, qid) -> bool:
        return qid in self.ids

    def __len__(self) -> int:
        return len(self.ids)


def cube_inner_mass(cloud: PointCloud, q) -> float:
    """mu of the cells lying inside one of the balls making up Q."""
    if cloud.points is None or q.balls is None:
        return cloud.mass(q.members)
    centers, radii = q.balls
    reach = cloud.max_cell_reach
    pts = cloud.points[centers]
    hit = np.zeros(len(cloud), dtype=bool)
    lists = cloud.tree.query_ball_point(pts, radii * (1 + 1e-9) + 1e-300)
    for c, r, lst in zip(pts, radii, lists):
        if not lst:
            continue
        idx = np.asarray(lst, dtype=int)
        idx = idx[~hit[idx]]
        if idx.size == 0:
            continue
        if reach > 0:
            far = np.maximum(np.abs(cloud.box_lo[idx] - c), np.abs(cloud.box_hi[idx] - c))
            idx = idx[np.sqrt((far * far).sum(axis=1)) <= r]
        hit[idx] = True
    return cloud.mass(np.flatnonzero(hit))


def cube_content_lower(cloud: PointCloud, q, s: float, delta: float) -> float:
    """Certified lower bound of H^s_delta(X cap Q): inner mass / C(delta)."""
    C = cloud.content_constant(delta)
    if C is None:
        return 0.0
    return cube_inner_mass(cloud, q) / C * (1 - _PTWISE_SLACK)


def _canonical(tree: CubeTree) -> dict:
    seen: dict = {}
    canon = {}
    for q in tree.cubes:
        key = (q.level, np.asarray(q.members, np.int64).tobytes())
        canon[q.id] = seen.setdefault(key, q.id)
    return canon


def select_high_content_cubes(tree: CubeTree, cloud: PointCloud | None, s: float | None, epsilon: float,
                              rho: float) -> HighContent:
    """Cubes with certified H^s_{rho diam Q}(X cap Q) > (1 + eps/4) diam(Q)^s.

    Cubes of one level with identical member sets are the same subset of X;
    only the lowest id of each such class is kept.
    """
    cloud = tree.cloud if cloud is None else cloud
    s = cloud.s if s is None else float(s)
    for name, v in (("epsilon", epsilon), ("rho", rho)):
        if not 0 < v < 1:
            raise ValidationError(f"{name} must lie in (0, 1), got {v}")
    if tree.kind != "schul":
        raise ValidationError("high-content selection needs Schul cubes")
    J = select_J(epsilon, rho, s)
    if "family" in tree.params and float(tree.params["M"]) != 2.0**J:
        raise ValidationError(f"tree has M = {tree.params['M']} but (epsilon, rho) give M = 2^{J}")
    alpha = alpha_of(epsilon)
    canon = _canonical(tree)
    ids, lower, thr = set(), {}, {}
    for q in tree.cubes:
        if canon[q.id] != q.id or q.members.size == 0:
            continue
        t = alpha * q.diam**s
        low = cube_content_lower(cloud, q, s, rho * q.diam)
        lower[q.id], thr[q.id] = low, t
        if low > t:
            ids.add(q.id)
    dup = {k: v for k, v in canon.items() if k != v}
    return HighContent(frozenset(ids), lower, thr, alpha, s, dup)


def check_qbinc(cloud: PointCloud, tree: CubeTree, fam: ThinnedFamilies, i: int, j: int, selected: HighContent,
                s: float, A: float, epsilon: float, rho: float) -> list[tuple]:
    """For every bad ball B(x, 2^-m), x in X_m^i, m = nJ + j, find Q_B and
    report whether it was selected.

    Rows are (n, x, cube id, ball lower bound, cube lower bound, selected).
    """
    canon = _canonical(tree)
    by_center = {(q.level, q.center): q for q in tree.cubes}
    rows = []
    for n, xs in enumerate(fam.nets[(i, j)]):
        m = n * fam.J + j
        r = 2.0**-m
        thr = (1 + epsilon) * (2 * r) ** s
        for x in xs.tolist():
            low = ball_content_lower(cloud, x, r, A, rho, s)
            if not low > thr:
                continue
            q = by_center[(n, x)]
            cid = canon[q.id]
            rows.append((n, x, cid, low, selected.lower.get(cid, 0.0), cid in selected))
    return rows


# ---------------------------------------------------------------- Stop forests

@dataclass
class StopForest:
    root: int
    layers: list             # layers[k] = Stop_k(Q), ids
    stop1: dict              # id -> Stop_1 of that cube
    residues: dict           # id -> R_T as member indices
    depth_of: dict           # id -> k with the cube in Stop_k(Q)
    tree: CubeTree = field(repr=False)

    @property
    def depth(self) -> int:
        """Number of nonempty layers."""
        return len(self.layers)

    def cubes(self) -> list[int]:
        return [t for layer in self.layers for t in layer]


def _properly_inside(R, Q) -> bool:
    if R.level <= Q.level or R.members.size == 0:
        return False
    return bool(np.all(np.isin(R.members, Q.members, assume_unique=True)))


def _stop1(Q, pool: list, by_id: dict, npts: int) -> list[int]:
    cand = [by_id[t] for t in pool if t != Q.id and _properly_inside(by_id[t], Q)]
    cand.sort(key=lambda q: (q.level, q.id))
    covered = np.zeros(npts, dtype=bool)
    keep = []
    for R in cand:
        hit = covered[R.members]
        if hit.all():
            continue
        if hit.any():
            raise InvariantError(f"cube {R.id} overlaps a stopped cube without nesting")
        covered[R.members] = True
        keep.append(R.id)
    return keep


def build_stop_forest(Q: int, C, tree: CubeTree) -> StopForest:
    """Stop_0 = {Q}, Stop_1(T) = maximal cubes of C properly inside T,
    Stop_{k+1} = union of Stop_1 over Stop_k."""
    ids = set(C.ids if isinstance(C, HighContent) else C)
    if Q not in ids:
        raise ValidationError(f"cube {Q} is not in the selected set")
    by_id = {q.id: q for q in tree.cubes}
    npts = 1 + max(int(by_id[t].members.max(initial=0)) for t in ids)
    if tree.cloud is not None:
        npts = max(npts, len(tree.cloud))
    pool = sorted(ids)
    layers, stop1, residues, depth_of = [[Q]], {}, {}, {Q: 0}
    while True:
        nxt = []
        for T in layers[-1]:
            inner = [t for t in pool if by_id[t].level > by_id[T].level]
            kids = _stop1(by_id[T], inner, by_id, npts)
            stop1[T] = kids
            taken = np.concatenate([by_id[r].members for r in kids]) if kids else np.zeros(0, int)
            residues[T] = np.setdiff1d(by_id[T].members, taken)
            for r in kids:
                depth_of[r] = len(layers)
            nxt.extend(kids)
        if not nxt:
            break
        layers.append(nxt)
    forest = StopForest(Q, layers, stop1, residues, depth_of, tree)
    _verify_forest(forest, ids, by_id)
    return forest


def _verify_forest(forest: StopForest, ids: set, by_id: dict) -> None:
    for T, kids in forest.stop1.items():
        seen = set()
        for r in kids:
            mem = set(by_id[r].members.tolist())
            if seen & mem:
                raise InvariantError(f"Stop_1({T}) is not disjoint")
            seen |= mem
        for t in ids:
            R = by_id[t]
            if t in kids or not _properly_inside(R, by_id[T]):
                continue
            if not any(_properly_inside(R, by_id[k]) for k in kids):
                raise InvariantError(f"cube {t} inside {T} is missed by Stop_1({T})")


# ---------------------------------------------------------------- weights

@dataclass
class WeightSequence:
    root: int
    alpha: float
    s: float
    members: np.ndarray      # cloud indices of Q
    stages: list             # stages[k] = w_Q^k on members
    m: dict                  # id -> m(T)
    cells: list              # cells[k] = [(cell id, member mask, mass, value)]
    k_Q: np.ndarray          # number of selected cubes properly inside Q holding x
    diam_s: float

    @property
    def limit(self) -> np.ndarray:
        return self.stages[-1]

    @property
    def k_max(self) -> int:
        return len(self.stages) - 1

    def integral(self, k: int, weights: np.ndarray) -> float:
        return math.fsum(self.stages[k] * weights[self.members])

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf)
        w.writerow(["cube_id", "stage", "cell_id", "cell_mass", "value"])
        for k, cells in enumerate(self.cells):
            for cid, _, mass, val in cells:
                w.writerow([self.root, k, cid, repr(mass), repr(val)])
        return buf.getvalue()


def build_weight_sequence(forest: StopForest, cloud: PointCloud, s: float | None, epsilon: float,
                          check_hypothesis: bool = True, selected=None) -> WeightSequence:
    """Stages w_Q^0, ..., w_Q^{depth} of the weight martingale of a forest.

    w_Q^0 = diam(Q)^s / mu(Q) on Q, and
    w_Q^{k+1} = diam(Q)^s / m(Q) on R_Q, (diam(Q)^s / m(Q)) w_R^k on R in Stop_1(Q),
    with m(Q) = mu(R_Q) + sum_{R in Stop_1(Q)} diam(R)^s. The last stage is
    the limit. With ``check_hypothesis`` every forest cube must satisfy
    m(T) >= alpha diam(T)^s and mu(T) > alpha diam(T)^s, and the pointwise
    bound w^k(x) < alpha^(-min(k, k_Q(x)) - 1) is then verified.
    """
    s = cloud.s if s is None else float(s)
    alpha = alpha_of(epsilon)
    tree = forest.tree
    by_id = {q.id: q for q in tree.cubes}
    wts = cloud.weights
    d = {t: by_id[t].diam ** s for t in forest.depth_of}
    mu = {t: cloud.mass(by_id[t].members) for t in forest.depth_of}
    m = {}
    for t in forest.depth_of:
        if not mu[t] > 0:
            raise ValidationError(f"cube {t} has zero mass")
        m[t] = math.fsum([cloud.mass(forest.residues[t])] + [d[r] for r in forest.stop1[t]])
        if check_hypothesis:
            if m[t] < alpha * d[t]:
                raise HypothesisError(f"cube {t}: m = {m[t]:.6g} < alpha diam^s = {alpha * d[t]:.6g}")
            if not mu[t] > alpha * d[t]:
                raise HypothesisError(f"cube {t}: mu = {mu[t]:.6g} <= alpha diam^s = {alpha * d[t]:.6g}")

    memo: dict = {}

    def w(t: int, k: int) -> np.ndarray:
        key = (t, k)
        if key in memo:
            return memo[key]
        T = by_id[t]
        if k == 0:
            out = np.full(T.members.size, d[t] / mu[t])
        else:
            out = np.full(T.members.size, d[t] / m[t])
            for r in forest.stop1[t]:
                pos = np.searchsorted(T.members, by_id[r].members)
                out[pos] = d[t] / m[t] * w(r, k - 1)
        memo[key] = out
        return out

    Q = by_id[forest.root]
    stages = [w(forest.root, k) for k in range(forest.depth + 1)]
    # k_Q(x) from the selected set directly, as a cross-check of the layers
    pool = forest.cubes() if selected is None else sorted(selected.ids if isinstance(selected, HighContent) else selected)
    kq = np.zeros(Q.members.size, dtype=int)
    for t in pool:
        R = by_id[t]
        if t != Q.id and _properly_inside(R, Q):
            kq[np.searchsorted(Q.members, R.members)] += 1
    cells = _cells(forest, by_id, stages, wts)
    seq = WeightSequence(forest.root, alpha, s, Q.members, stages, m, cells, kq, d[forest.root])
    _verify_weights(seq, cloud, check_hypothesis)
    return seq


def _cells(forest: StopForest, by_id: dict, stages: list, wts: np.ndarray) -> list:
    Q = by_id[forest.root]
    out = []
    for k, vals in enumerate(stages):
        row = []
        parts = [("R", t, forest.residues[t]) for layer in forest.layers[:k] for t in layer]
        if k < forest.depth:
            parts += [("Q", t, by_id[t].members) for t in forest.layers[k]]
        for tag, t, mem in parts:
            if mem.size == 0:
                continue
            mask = np.zeros(Q.members.size, dtype=bool)
            mask[np.searchsorted(Q.members, mem)] = True
            v = vals[mask]
            if np.ptp(v) > _REL * max(abs(v).max(), 1e-300):
                raise InvariantError(f"stage {k} is not constant on cell {tag}{t}")
            row.append((f"{tag}{t}", mask, math.fsum(wts[mem]), float(v[0])))
        out.append(row)
    return out


def _verify_weights(seq: WeightSequence, cloud: PointCloud, pointwise: bool) -> None:
    wts = cloud.weights
    for k in range(len(seq.stages)):
        tot = seq.integral(k, wts)
        if abs(tot - seq.diam_s) > _REL * seq.diam_s:
            raise InvariantError(f"stage {k}: integral {tot!r} != diam^s {seq.diam_s!r}")
        cell_total = math.fsum(mass * val for _, _, mass, val in seq.cells[k])
        if abs(cell_total - seq.diam_s) > _REL * seq.diam_s:
            raise InvariantError(f"stage {k}: cell integral {cell_total!r} != diam^s")
    res = {cid: val for cid, _, _, val in seq.cells[1]} if len(seq.cells) > 1 else {}
    for k in range(2, len(seq.cells)):
        for cid, _, _, val in seq.cells[k]:
            if cid in res and res[cid] != val:
                raise InvariantError(f"residue {cid} changed at stage {k}")
            res.setdefault(cid, val)
    if pointwise:
        for k, vals in enumerate(seq.stages):
            bound = seq.alpha ** (-np.minimum(k, seq.k_Q) - 1.0) * (1 + _PTWISE_SLACK)
            if np.any(vals >= bound):
                raise InvariantError(f"stage {k}: pointwise bound fails")


# ---------------------------------------------------------------- packing

@dataclass
class PackingReport:
    lhs: float
    bound: float
    ratio: float             # lhs / mu(X)
    alpha: float
    maximal: list
    n_selected: int
    mass: float
    max_weight_sum: float    # max_x sum_{Q in C} w_Q(x)
    weight_integral: float   # integral of sum_Q w_Q
    uplim: list              # (k, mu{x in more than k cubes}, alpha^-k alpha/(alpha-1) mu(X))
    sequences: dict = field(default_factory=dict, repr=False)

    @property
    def ok(self) -> bool:
        return self.lhs <= self.bound * (1 + _REL)

    def to_dict(self) -> dict:
        return {"lhs": self.lhs, "bound": self.bound, "ratio": self.ratio, "alpha": self.alpha,
                "maximal": list(self.maximal), "n_selected": self.n_selected, "mass": self.mass,
                "max_weight_sum": self.max_weight_sum, "weight_integral": self.weight_integral,
                "uplim": [list(r) for r in self.uplim], "ok": self.ok}


def maximal_cubes(C, tree: CubeTree) -> list[int]:
    ids = sorted(C.ids if isinstance(C, HighContent) else C)
    by_id = {q.id: q for q in tree.cubes}
    return [t for t in ids if not any(u != t and _properly_inside(by_id[t], by_id[u]) for u in ids)]


def packing_bound_via_weights(tree: CubeTree, C, cloud: PointCloud | None, s: float | None, epsilon: float,
                              check_hypothesis: bool = True) -> PackingReport:
    """Sum of diam(Q)^s over C against (alpha/(alpha-1)) sum of mu(Q_0) over
    maximal Q_0, via the limit weights w_Q of every Q in C."""
    cloud = tree.cloud if cloud is None else cloud
    s = cloud.s if s is None else float(s)
    alpha = alpha_of(epsilon)
    K = series_constant(alpha)
    ids = sorted(C.ids if isinstance(C, HighContent) else C)
    by_id = {q.id: q for q in tree.cubes}
    mass = cloud.total_mass
    tops = maximal_cubes(ids, tree)
    for a in range(len(tops)):
        for b in range(a + 1, len(tops)):
            if np.intersect1d(by_id[tops[a]].members, by_id[tops[b]].members).size:
                raise InvariantError(f"maximal cubes {tops[a]} and {tops[b]} overlap")
    lhs = math.fsum(by_id[t].diam ** s for t in ids)
    bound = K * math.fsum(cloud.mass(by_id[t].members) for t in tops)
    W = np.zeros(len(cloud))
    count = np.zeros(len(cloud), dtype=int)
    seqs = {}
    for t in ids:
        seq = build_weight_sequence(build_stop_forest(t, ids, tree), cloud, s, epsilon,
                                    check_hypothesis=check_hypothesis, selected=ids)
        seqs[t] = seq
        W[seq.members] += seq.limit
        count[by_id[t].members] += 1
    w_int = math.fsum(W * cloud.weights)
    if ids and abs(w_int - lhs) > _REL * lhs:
        raise InvariantError(f"sum of weight integrals {w_int!r} != packing sum {lhs!r}")
    uplim = []
    for k in range(int(count.max(initial=0)) + 1):
        uplim.append((k, cloud.mass(np.flatnonzero(count > k)), alpha ** -k * K * mass))
    return PackingReport(lhs, bound, lhs / mass if mass > 0 else math.inf, alpha, tops, len(ids), mass,
                         float(W.max(initial=0.0)), w_int, uplim, seqs)


@dataclass
class FamilyPacking:
    reports: dict            # (i, j) -> PackingReport
    N: int
    J: int
    alpha: float
    mass: float

    @property
    def total(self) -> float:
        return math.fsum(r.lhs for r in self.reports.values())

    @property
    def bound(self) -> float:
        return self.N * self.J * series_constant(self.alpha) * self.mass

    @property
    def ok(self) -> bool:
        return all(r.ok for r in self.reports.values()) and self.total <= self.bound * (1 + _REL)


def packing_over_families(cloud: PointCloud, fam: ThinnedFamilies, s: float | None, epsilon: float, rho: float,
                          check_hypothesis: bool = True) -> FamilyPacking:
    """Packing reports for every family (i, j) of a thinning."""
    s = cloud.s if s is None else float(s)
    reports = {}
    for i, j in fam.families():
        tree = build_family_cubes(cloud, fam, i, j)
        sel = select_high_content_cubes(tree, cloud, s, epsilon, rho)
        reports[(i, j)] = packing_bound_via_weights(tree, sel, cloud, s, epsilon, check_hypothesis)
    return FamilyPacking(reports, fam.N, fam.J, alpha_of(epsilon), cloud.total_mass)

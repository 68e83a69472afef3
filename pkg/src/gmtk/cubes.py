"""Cube decompositions of a point cloud.

Schul cubes are chain closures of contracted net balls; Christ-David cubes
come from nearest-parent assignment along a nested net hierarchy. Both are
stored as member-index sets on the cloud.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import sparse
from scipy.spatial import cKDTree

from .errors import ValidationError
from .metric import NetHierarchy, PointCloud, greedy_net_indices


@dataclass
class Cube:
    id: int
    level: int
    center: int
    radius: float            # B_Q radius: c K M^-n (Schul) or 3 l(Q) (Christ-David)
    side: float              # K M^-n (Schul) or l(Q) = 2^-k (Christ-David)
    members: np.ndarray
    diam: float
    children: list = field(default_factory=list)
    parent: int | None = None
    family: tuple | None = None
    # Schul cubes: centers and radii of the balls cB whose union is Q
    balls: tuple | None = field(default=None, repr=False)


@dataclass
class CubeTree:
    kind: str
    params: dict
    cubes: list
    cloud: PointCloud | None = field(default=None, repr=False)
    c0: float | None = None

    def levels(self) -> list[int]:
        return sorted({q.level for q in self.cubes})

    def at_level(self, n: int) -> list[Cube]:
        return [q for q in self.cubes if q.level == n]

    @property
    def roots(self) -> list[int]:
        return [q.id for q in self.cubes if q.parent is None]

    def to_dict(self) -> dict:
        return {
            "kind": self.kind, "params": self.params,
            "cubes": [
                {"id": q.id, "level": q.level, "center": q.center, "members": q.members.tolist(),
                 "children": list(q.children), "side": q.side, "radius": q.radius, "diam": q.diam,
                 **({"family": list(q.family)} if q.family is not None else {})}
                for q in self.cubes
            ],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict())


# ---------------------------------------------------------------- thinning

@dataclass(frozen=True)
class ThinnedFamilies:
    a: int
    J: int
    N: int
    A: float
    c: float
    M: int
    # nets[(i, j)][n] = X_n^{i,j} = X_{nJ+j}^i as sorted cloud indices
    nets: dict
    # split[m] = (X_m^1, ..., X_m^{N_m})
    split: dict

    def K(self, j: int) -> float:
        return 2.0 ** (-j + self.a + 4)

    def families(self) -> list[tuple[int, int]]:
        return sorted(self.nets)


def exponent_a(A: float) -> int:
    """The integer a with 2^(a-1) <= A < 2^a."""
    if not A >= 1:
        raise ValidationError(f"A must be >= 1, got {A}")
    a = 1
    while 2**a <= A:
        a += 1
    return a


def select_J(epsilon: float, rho: float, s: float) -> int:
    """Smallest J with 2^-J < min(rho, epsilon / (16 s))."""
    target = min(rho, epsilon / (16 * s)) if s > 0 else rho
    J = 1
    while not 2.0**-J < target:
        J += 1
    return J


def _check_unit(name: str, v: float) -> None:
    if not 0 < v < 1:
        raise ValidationError(f"{name} must lie in (0, 1), got {v}")


def thin_nets(cloud: PointCloud, hierarchy: NetHierarchy, A: float, epsilon: float, rho: float,
              s: float | None = None) -> ThinnedFamilies:
    """Split every X_m into 2^(-m+a+4)-separated pieces and regroup them
    into the families X_n^{i,j} = X_{nJ+j}^i."""
    _check_unit("epsilon", epsilon)
    _check_unit("rho", rho)
    s = cloud.s if s is None else float(s)
    a = exponent_a(A)
    J = select_J(epsilon, rho, s)
    if hierarchy.n_min != 0:
        raise ValidationError("thinning needs a hierarchy starting at n = 0")
    split: dict[int, tuple] = {}
    for m in hierarchy.levels():
        residue = hierarchy.level(m).member_indices
        sep = 2.0 ** (-m + a + 4)
        pieces = []
        while residue.size:
            piece = greedy_net_indices(cloud, sep, residue)
            pieces.append(piece)
            residue = np.setdiff1d(residue, piece)
        split[m] = tuple(pieces)
    N = max((len(p) for p in split.values()), default=0)
    nets: dict = {}
    for i in range(N):
        for j in range(J):
            seq = []
            n = 0
            while n * J + j <= hierarchy.n_max:
                pieces = split[n * J + j]
                seq.append(pieces[i] if i < len(pieces) else np.array([], dtype=int))
                n += 1
            nets[(i, j)] = seq
    return ThinnedFamilies(a, J, N, float(A), A * 2.0 ** (-4 - a), 2**J, nets, split)


# ---------------------------------------------------------------- Schul

class _DSU:
    def __init__(self, n: int):
        self.p = np.arange(n)

    def find(self, x: int) -> int:
        p = self.p
        root = x
        while p[root] != root:
            root = p[root]
        while p[x] != root:
            p[x], x = root, p[x]
        return root

    def union(self, a: int, b: int) -> None:
        ra, rb = self.find(a), self.find(b)
        if ra != rb:
            if ra < rb:
                self.p[rb] = ra
            else:
                self.p[ra] = rb


def _union_diameter(centers: np.ndarray | None, radii: np.ndarray, D: np.ndarray | None = None) -> float:
    """diam of a union of balls in a normed space: max d_ij + r_i + r_j."""
    if D is not None:
        return float((D + radii[:, None] + radii[None, :]).max())
    k, dim = centers.shape
    if k == 1:
        return 2.0 * float(radii[0])
    if dim == 1:
        x = centers[:, 0]
        return float((x + radii).max() - (x - radii).min())
    cand = np.arange(k)
    if dim == 2 and k > 64:
        # balls extremal in some direction, up to the discretization slack
        theta = np.linspace(0, 2 * np.pi, 256, endpoint=False)
        U = np.c_[np.cos(theta), np.sin(theta)]
        mid = centers.mean(axis=0)
        rel = centers - mid
        R = float(np.sqrt((rel**2).sum(axis=1)).max())
        supp = rel @ U.T + radii[:, None]
        slack = R * (theta[1] - theta[0]) + 1e-12 * (R + radii.max())
        keep = np.any(supp >= supp.max(axis=0) - slack, axis=1)
        cand = np.flatnonzero(keep)
    best = 0.0
    P, r = centers[cand], radii[cand]
    for start in range(0, cand.size, 1024):
        d = np.sqrt(((P[start:start + 1024, None, :] - P[None, :, :]) ** 2).sum(axis=2))
        best = max(best, float((d + r[start:start + 1024, None] + r[None, :]).max()))
    return best


def default_schul_nets(cloud: PointCloud, K: float, M: float, max_levels: int = 64) -> list[np.ndarray]:
    """Maximal K M^-n nets for n = 0, 1, ... until the net is the whole cloud."""
    nets = []
    order = np.arange(len(cloud))
    for n in range(max_levels):
        members = greedy_net_indices(cloud, K * float(M) ** -n, order)
        nets.append(members)
        if members.size == len(cloud):
            break
    return nets


def build_schul_cubes(cloud: PointCloud, nets=None, K: float = 1.0, M: float = 16, c: float = 2.0**-5,
                      family: tuple | None = None) -> CubeTree:
    """Chain closures Q_B of the balls cB, B = B(x, K M^-n), x in nets[n].

    Two balls cB, cB' meet iff the distance of their centers is at most
    the sum of their radii. Processing levels from finest to coarsest with
    a union-find gives, after level n, exactly the chain components of the
    balls of levels >= n; Q_B is the set of cloud points inside a ball of
    B's component.
    """
    if not 0 < c < 1 / 8:
        raise ValidationError(f"c must lie in (0, 1/8), got {c}")
    if not M >= 2:
        raise ValidationError(f"M must be >= 2, got {M}")
    if not K > 0:
        raise ValidationError(f"K must be positive, got {K}")
    if nets is None:
        nets = default_schul_nets(cloud, K, M)
    nets = [np.asarray(x, dtype=int) for x in nets]
    L = len(nets)
    radius = [c * K * float(M) ** -n for n in range(L)]
    ball_level = np.concatenate([np.full(x.size, n) for n, x in enumerate(nets)]) if L else np.zeros(0, int)
    ball_center = np.concatenate(nets) if L else np.zeros(0, int)
    start = np.r_[0, np.cumsum([x.size for x in nets])]
    nb = ball_center.size
    ball_r = np.array([radius[n] for n in ball_level]) if nb else np.zeros(0)
    dsu = _DSU(nb)
    coords = cloud.points
    trees = [cKDTree(coords[x]) if coords is not None and x.size else None for x in nets]
    npts = len(cloud)
    rep = np.full(npts, -1, dtype=np.int64)
    cubes: list[Cube] = []
    for n in range(L - 1, -1, -1):
        r_n = radius[n]
        ids = np.arange(start[n], start[n + 1])
        if ids.size == 0:
            continue
        # merge with balls of levels >= n
        for m in range(n, L):
            if nets[m].size == 0:
                continue
            reach = r_n + radius[m]
            if coords is not None:
                hits = trees[m].query_ball_point(coords[nets[n]], reach * (1 + 1e-9))
                for a, lst in zip(ids, hits):
                    if not lst:
                        continue
                    lst = np.asarray(lst, dtype=int)
                    d = np.sqrt(((coords[nets[m][lst]] - coords[ball_center[a]]) ** 2).sum(axis=1))
                    for b in lst[d <= reach]:
                        dsu.union(int(a), int(start[m] + b))
            else:
                D = cloud.matrix[np.ix_(nets[n], nets[m])]
                for ai, bi in np.argwhere(D <= reach):
                    dsu.union(int(ids[ai]), int(start[m] + bi))
        # points covered by a level-n ball
        for a in ids:
            inside = cloud.within(int(ball_center[a]), r_n)
            fresh = inside[rep[inside] < 0]
            rep[fresh] = a
        covered = np.flatnonzero(rep >= 0)
        roots = np.array([dsu.find(int(b)) for b in rep[covered]], dtype=np.int64)
        order = np.argsort(roots, kind="stable")
        uroots, first = np.unique(roots[order], return_index=True)
        bounds = np.r_[first, order.size]
        groups = {int(u): np.sort(covered[order[bounds[k]:bounds[k + 1]]]) for k, u in enumerate(uroots)}
        # balls of levels >= n per component, for the diameters
        allb = np.arange(start[n], nb)
        broots = np.array([dsu.find(int(b)) for b in allb], dtype=np.int64)
        comp_diam: dict[int, float] = {}
        comp_balls: dict[int, tuple] = {}
        for a in ids:
            root = dsu.find(int(a))
            if root not in comp_diam:
                bs = allb[broots == root]
                comp_balls[root] = (ball_center[bs], ball_r[bs])
                if coords is not None:
                    comp_diam[root] = _union_diameter(coords[ball_center[bs]], ball_r[bs])
                else:
                    Dm = cloud.matrix[np.ix_(ball_center[bs], ball_center[bs])]
                    comp_diam[root] = _union_diameter(None, ball_r[bs], Dm)
            q = Cube(id=len(cubes), level=n, center=int(ball_center[a]), radius=r_n,
                     side=K * float(M) ** -n, members=groups[root], diam=comp_diam[root], family=family,
                     balls=comp_balls[root])
            cubes.append(q)
    _link_by_containment(cubes)
    params = {"K": K, "M": M, "c": c, "levels": L}
    if family is not None:
        params["family"] = list(family)
    return CubeTree("schul", params, _renumber(cubes), cloud)


def _link_by_containment(cubes: list[Cube]) -> None:
    """Parent = a cube at the nearest coarser level containing the cube."""
    by_level: dict[int, list[Cube]] = {}
    for q in cubes:
        by_level.setdefault(q.level, []).append(q)
    levels = sorted(by_level)
    owner: dict[int, dict[int, int]] = {}
    for n in levels:
        own = {}
        for q in by_level[n]:
            for p in q.members.tolist():
                own.setdefault(p, q.id)
        owner[n] = own
    for k, n in enumerate(levels):
        for q in by_level[n]:
            if q.members.size == 0:
                continue
            p0 = int(q.members[0])
            for m in reversed(levels[:k]):
                pid = owner[m].get(p0)
                if pid is not None:
                    q.parent = pid
                    break
    index = {q.id: q for q in cubes}
    for q in cubes:
        if q.parent is not None:
            index[q.parent].children.append(q.id)


def _renumber(cubes: list[Cube]) -> list[Cube]:
    """Order cubes coarse to fine and make ids list positions."""
    order = sorted(cubes, key=lambda q: (q.level, q.center, q.id))
    new = {q.id: k for k, q in enumerate(order)}
    for q in order:
        q.id = new[q.id]
        q.parent = None if q.parent is None else new[q.parent]
        q.children = sorted(new[c] for c in q.children)
    return order


def build_family_cubes(cloud: PointCloud, fam: ThinnedFamilies, i: int, j: int) -> CubeTree:
    """Schul cubes on X_n^{i,j} with K = 2^(-j+a+4), M = 2^J, c = A 2^(-4-a)."""
    return build_schul_cubes(cloud, fam.nets[(i, j)], fam.K(j), fam.M, fam.c, family=(i, j))


# ---------------------------------------------------------------- Christ-David

def build_christ_david_cubes(cloud: PointCloud, hierarchy: NetHierarchy) -> CubeTree:
    """Cubes from nearest-parent assignment on a nested hierarchy.

    Each point of X_{k+1} picks the nearest point of X_k; ties go to the
    point that entered the hierarchy earliest, then to the lowest index.
    Cloud points outside the finest net join their nearest finest-net
    point. l(Q) = 2^-k and B_Q = B(x_Q, 3 l(Q)).
    """
    if not hierarchy.nested:
        raise ValidationError("Christ-David cubes need a nested hierarchy")
    levels = list(hierarchy.levels())
    birth = np.full(len(cloud), np.iinfo(np.int64).max, dtype=np.int64)
    for n in reversed(levels):
        birth[hierarchy.level(n).member_indices] = n
    parent_of: dict[int, np.ndarray] = {}
    for k in levels[1:]:
        child = hierarchy.level(k).member_indices
        par = hierarchy.level(k - 1).member_indices
        parent_of[k] = par[_nearest(cloud, child, par, birth)]
    finest = hierarchy.level(levels[-1]).member_indices
    everyone = np.arange(len(cloud))
    leaf_owner = finest[_nearest(cloud, everyone, finest, birth)]
    # owner[k][p] = level-k net point whose cube contains cloud point p
    owner = {levels[-1]: leaf_owner}
    for k in reversed(levels[1:]):
        child = hierarchy.level(k).member_indices
        lookup = np.full(len(cloud), -1, dtype=np.int64)
        lookup[child] = parent_of[k]
        owner[k - 1] = lookup[owner[k]]
    cubes: list[Cube] = []
    for k in levels:
        ell = 2.0**-k
        o = owner[k]
        order = np.argsort(o, kind="stable")
        centers, first = np.unique(o[order], return_index=True)
        bounds = np.r_[first, order.size]
        for t, x in enumerate(centers):
            mem = np.sort(order[bounds[t]:bounds[t + 1]])
            cubes.append(Cube(len(cubes), k, int(x), 3 * ell, ell, mem, cloud.diameter(mem)))
    _link_by_containment(cubes)
    cubes = _renumber(cubes)
    tree = CubeTree("christ_david", {"n_min": levels[0], "n_max": levels[-1]}, cubes, cloud)
    tree.c0 = measure_c0(tree)
    return tree


def _nearest(cloud: PointCloud, who: np.ndarray, among: np.ndarray, birth: np.ndarray) -> np.ndarray:
    """Position in ``among`` of the nearest point for each of ``who``."""
    out = np.empty(who.size, dtype=np.int64)
    key_birth = birth[among]
    for s0 in range(0, who.size, 256):
        blk = who[s0:s0 + 256]
        d = cloud.pairwise(blk, among)
        dmin = d.min(axis=1, keepdims=True)
        tied = d <= dmin
        # lexicographic: earliest birth, then lowest index
        score = np.where(tied, key_birth[None, :].astype(float) * (len(cloud) + 1) + among[None, :], np.inf)
        out[s0:s0 + 256] = score.argmin(axis=1)
    return out


def measure_c0(tree: CubeTree) -> float:
    """Largest c0 such that every cloud point within c0 l(Q) of x_Q is in Q,
    minimized over cubes."""
    cloud = tree.cloud
    best = math.inf
    everyone = np.arange(len(cloud))
    for q in tree.cubes:
        outside = np.setdiff1d(everyone, q.members, assume_unique=True)
        if outside.size == 0:
            continue
        d = float(cloud.distances_from(q.center, outside).min())
        best = min(best, d / q.side)
    return best


# ---------------------------------------------------------------- axioms

@dataclass
class AxiomReport:
    violations: list
    checked_pairs: int
    n_cubes: int
    c0: float | None = None
    outer_factor: float | None = None

    @property
    def ok(self) -> bool:
        return not self.violations


def verify_cube_axioms(tree: CubeTree, cloud: PointCloud | None = None) -> AxiomReport:
    """Exhaustive nested-or-disjoint check plus the per-cube sandwich.

    Schul: B_Q cap X within Q within (1 + 8/M) B_Q. Christ-David: every
    level partitions the cloud and Q sits inside B(x_Q, 2 l(Q)); the inner
    constant c0 is measured and must be positive.
    """
    cloud = tree.cloud if cloud is None else cloud
    cubes = tree.cubes
    if not cubes:
        return AxiomReport([], 0, 0)
    violations: list[str] = []
    # dedupe identical member sets before the pairwise check
    uniq: dict[bytes, int] = {}
    rep_of = []
    for q in cubes:
        k = np.asarray(q.members, dtype=np.int64).tobytes()
        rep_of.append(uniq.setdefault(k, q.id))
    reps = sorted(set(rep_of))
    pos = {r: t for t, r in enumerate(reps)}
    npts = len(cloud) if cloud is not None else 1 + max(int(q.members.max(initial=0)) for q in cubes)
    rows = np.concatenate([np.full(cubes[r].members.size, t) for t, r in enumerate(reps)])
    cols = np.concatenate([cubes[r].members for r in reps])
    inc = sparse.csr_matrix((np.ones(rows.size), (rows, cols)), shape=(len(reps), npts))
    inter = (inc @ inc.T).tocoo()
    sizes = np.asarray(inc.sum(axis=1)).ravel()
    pairs = 0
    for a, b, v in zip(inter.row, inter.col, inter.data):
        if a >= b:
            continue
        pairs += 1
        if v < min(sizes[a], sizes[b]):
            violations.append(f"cubes {reps[a]} and {reps[b]} overlap without nesting")
    outer = 0.0
    if cloud is not None:
        for q in cubes:
            if q.members.size == 0:
                continue
            d_mem = cloud.distances_from(q.center, q.members)
            if tree.kind == "schul":
                core = cloud.within(q.center, q.radius)
                if not np.all(np.isin(core, q.members)):
                    violations.append(f"cube {q.id}: core ball not inside the cube")
                bound = (1 + 8 / tree.params["M"]) * q.radius
                outer = max(outer, float(d_mem.max()) / q.radius)
                if d_mem.max() > bound * (1 + 1e-12):
                    violations.append(f"cube {q.id}: member outside (1+8/M) B_Q")
            else:
                outer = max(outer, float(d_mem.max()) / q.side)
                if d_mem.max() > 2 * q.side * (1 + 1e-12):
                    violations.append(f"cube {q.id}: member outside B(x_Q, 2 l(Q))")
        if tree.kind == "christ_david":
            for n in tree.levels():
                mem = np.concatenate([q.members for q in tree.at_level(n)])
                if mem.size != len(cloud) or np.unique(mem).size != len(cloud):
                    violations.append(f"level {n} does not partition the cloud")
            if tree.c0 is not None and not tree.c0 > 0:
                violations.append("measured c0 is not positive")
    return AxiomReport(violations, pairs, len(cubes), tree.c0, outer)

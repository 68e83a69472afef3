"""Weighted finite metric spaces, maximal separated nets and set distances.

A :class:`PointCloud` is the discrete stand-in for a set ``X`` carrying the
measure ``H^s|_X``: every point owns a generator cell (an axis-aligned box,
possibly degenerate) and the natural-measure mass of that cell.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Sequence

import numpy as np
from scipy.spatial import cKDTree

from .errors import UndefinedDistanceError, ValidationError
from .intervals import IntervalUnion

_TRIANGLE_SAMPLES = 1000


@dataclass(frozen=True)
class Ball:
    """Closed ball. ``center`` is a cloud index or a coordinate vector."""

    center: object
    radius: float

    def __post_init__(self):
        if not self.radius > 0:
            raise ValidationError(f"ball radius must be positive, got {self.radius}")

    @property
    def diameter(self) -> float:
        # diam B(x, r) = 2r by convention, whatever the cloud looks like
        return 2.0 * self.radius

    def dilate(self, factor: float) -> "Ball":
        return Ball(self.center, factor * self.radius)


@dataclass(frozen=True, eq=False)
class PointCloud:
    weights: np.ndarray
    s: float
    points: np.ndarray | None = None
    matrix: np.ndarray | None = None
    label: str = ""
    cells_lo: np.ndarray | None = None
    cells_hi: np.ndarray | None = None
    # ((delta_upper, C), ...): for covers with cap delta < delta_upper the
    # cloud measure satisfies mu(U) <= C diam(U)^s
    comparability: tuple = ()
    intervals: IntervalUnion | None = None

    def __len__(self) -> int:
        return int(self.weights.shape[0])

    @property
    def size(self) -> int:
        return len(self)

    @property
    def is_euclidean(self) -> bool:
        return self.points is not None

    @property
    def dim(self) -> int:
        return int(self.points.shape[1]) if self.points is not None else 0

    @property
    def total_mass(self) -> float:
        return math.fsum(self.weights.tolist())

    def mass(self, idx) -> float:
        idx = np.asarray(idx, dtype=int)
        return math.fsum(self.weights[idx].tolist())

    @cached_property
    def tree(self) -> cKDTree:
        if self.points is None:
            raise ValidationError("kd-tree requires coordinates")
        return cKDTree(self.points)

    @cached_property
    def box_lo(self) -> np.ndarray:
        if self.cells_lo is not None:
            return self.cells_lo
        if self.points is None:
            raise ValidationError("cells require coordinates")
        return self.points

    @cached_property
    def box_hi(self) -> np.ndarray:
        if self.cells_hi is not None:
            return self.cells_hi
        if self.points is None:
            raise ValidationError("cells require coordinates")
        return self.points

    @cached_property
    def atom_diameters(self) -> np.ndarray:
        if self.points is None:
            return np.zeros(len(self))
        return _norm(self.box_hi - self.box_lo)

    @cached_property
    def max_cell_reach(self) -> float:
        """Largest distance from a point to the far corner of its own cell."""
        if self.points is None or self.cells_lo is None:
            return 0.0
        far = np.maximum(np.abs(self.box_hi - self.points), np.abs(self.points - self.box_lo))
        return float(_norm(far).max(initial=0.0))

    def content_constant(self, delta: float) -> float | None:
        """Constant C with mu(U) <= C diam(U)^s for all U of diam <= delta."""
        for upper, c in self.comparability:
            if delta < upper or math.isinf(upper):
                return c
        return None

    def center_coords(self, center) -> np.ndarray:
        if isinstance(center, (int, np.integer)):
            if self.points is None:
                raise ValidationError("cloud has no coordinates")
            return self.points[int(center)]
        if self.points is None:
            raise ValidationError("coordinate centers need a coordinate cloud")
        c = np.atleast_1d(np.asarray(center, dtype=float))
        if c.shape != (self.dim,):
            raise ValidationError(f"center has dimension {c.shape}, cloud has {self.dim}")
        return c

    def distances_from(self, center, idx=None) -> np.ndarray:
        """Distances from a center (index or coordinates) to points ``idx``."""
        if self.points is None:
            if not isinstance(center, (int, np.integer)):
                raise ValidationError("distance-matrix clouds need index centers")
            row = self.matrix[int(center)]
            return row if idx is None else row[np.asarray(idx, dtype=int)]
        c = self.center_coords(center)
        pts = self.points if idx is None else self.points[np.asarray(idx, dtype=int)]
        return _norm(pts - c)

    def pairwise(self, a, b) -> np.ndarray:
        a = np.asarray(a, dtype=int)
        b = np.asarray(b, dtype=int)
        if self.points is None:
            return self.matrix[np.ix_(a, b)]
        pa, pb = self.points[a], self.points[b]
        return np.sqrt(((pa[:, None, :] - pb[None, :, :]) ** 2).sum(axis=2))

    def ball_indices(self, ball: Ball) -> np.ndarray:
        """Sorted indices of cloud points in the closed ball."""
        return self.within(ball.center, ball.radius)

    def within(self, center, r: float, strict: bool = False) -> np.ndarray:
        if self.points is None:
            d = self.distances_from(center)
            hit = d < r if strict else d <= r
            return np.flatnonzero(hit)
        c = self.center_coords(center)
        cand = np.asarray(self.tree.query_ball_point(c, r * (1 + 1e-9) + 1e-300), dtype=int)
        if cand.size == 0:
            return cand
        d = _norm(self.points[cand] - c)
        hit = d < r if strict else d <= r
        return np.sort(cand[hit])

    def diameter(self, idx=None) -> float:
        idx = np.arange(len(self)) if idx is None else np.asarray(idx, dtype=int)
        if idx.size <= 1:
            return 0.0
        if self.points is None:
            return float(self.matrix[np.ix_(idx, idx)].max())
        pts = self.points[idx]
        if pts.shape[1] == 1:
            return float(pts.max() - pts.min())
        best = 0.0
        for start in range(0, idx.size, 512):
            block = pts[start:start + 512]
            d = np.sqrt(((block[:, None, :] - pts[None, :, :]) ** 2).sum(axis=2))
            best = max(best, float(d.max()))
        return best

    def subcloud(self, idx, label: str | None = None) -> "PointCloud":
        idx = np.asarray(idx, dtype=int)
        return PointCloud(
            weights=self.weights[idx].copy(),
            s=self.s,
            points=None if self.points is None else self.points[idx].copy(),
            matrix=None if self.matrix is None else self.matrix[np.ix_(idx, idx)].copy(),
            label=self.label if label is None else label,
            cells_lo=None if self.cells_lo is None else self.cells_lo[idx].copy(),
            cells_hi=None if self.cells_hi is None else self.cells_hi[idx].copy(),
            comparability=self.comparability,
        )

    def to_dict(self) -> dict:
        out: dict = {"label": self.label, "s": self.s}
        if self.points is not None:
            out["points"] = self.points.tolist()
        else:
            out["matrix"] = self.matrix.tolist()
        out["weights"] = self.weights.tolist()
        if self.cells_lo is not None:
            out["cells"] = {"lo": self.cells_lo.tolist(), "hi": self.cells_hi.tolist()}
        if self.comparability:
            out["comparability"] = [[None if math.isinf(u) else u, c] for u, c in self.comparability]
        if self.intervals is not None:
            out["intervals"] = self.intervals.format()
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, doc: dict) -> "PointCloud":
        if "s" not in doc or "weights" not in doc:
            raise ValidationError("point cloud document needs 's' and 'weights'")
        cells = doc.get("cells")
        comp = tuple(
            (math.inf if u is None else float(u), float(c)) for u, c in doc.get("comparability", [])
        )
        intervals = IntervalUnion.parse(doc["intervals"]) if doc.get("intervals") else None
        if "matrix" in doc:
            return build_point_cloud(
                doc["matrix"], doc["weights"], doc["s"], label=doc.get("label", ""),
                matrix=True, comparability=comp,
            )
        return build_point_cloud(
            doc["points"], doc["weights"], doc["s"], label=doc.get("label", ""),
            cells=None if cells is None else (cells["lo"], cells["hi"]),
            comparability=comp, intervals=intervals,
        )

    @classmethod
    def from_json(cls, text: str) -> "PointCloud":
        return cls.from_dict(json.loads(text))


def _norm(v: np.ndarray) -> np.ndarray:
    return np.sqrt((v * v).sum(axis=-1))


def build_point_cloud(
    coords_or_distances,
    weights=None,
    s: float = 1.0,
    label: str = "",
    *,
    matrix: bool = False,
    cells=None,
    comparability: Iterable = (),
    intervals: IntervalUnion | None = None,
    seed: int = 0,
) -> PointCloud:
    """Validate and freeze a weighted cloud.

    ``coords_or_distances`` is an ``(N, n)`` coordinate array (a flat list is
    read as points on the line) or, with ``matrix=True``, a symmetric
    distance matrix. The triangle inequality is checked on
    ``min(1000, N^3)`` triples.
    """
    data = np.asarray(coords_or_distances, dtype=float)
    if matrix:
        if data.ndim != 2 or data.shape[0] != data.shape[1]:
            raise ValidationError(f"distance matrix must be square, got shape {data.shape}")
        n = data.shape[0]
        bad = np.argwhere(data != data.T)
        if bad.size:
            i, j = bad[0]
            raise ValidationError(f"distance matrix not symmetric at ({i}, {j})")
        bad = np.argwhere(data < 0)
        if bad.size:
            i, j = bad[0]
            raise ValidationError(f"negative distance at ({i}, {j})")
        diag = np.flatnonzero(np.diag(data) != 0)
        if diag.size:
            raise ValidationError(f"nonzero diagonal entry at ({diag[0]}, {diag[0]})")
        off = data + np.eye(n)
        bad = np.argwhere(off == 0)
        if bad.size:
            i, j = bad[0]
            raise ValidationError(f"zero distance between distinct points ({i}, {j})")
        points = None
        mat = data.copy()
    else:
        if data.ndim == 1:
            data = data[:, None]
        if data.ndim != 2:
            raise ValidationError(f"coordinates must be (N, n), got shape {data.shape}")
        if not np.all(np.isfinite(data)):
            bad = np.argwhere(~np.isfinite(data))[0]
            raise ValidationError(f"non-finite coordinate at point {bad[0]}")
        n = data.shape[0]
        points = data.copy()
        mat = None
    if n == 0:
        raise ValidationError("empty point cloud")
    w = np.ones(n) if weights is None else np.asarray(weights, dtype=float).reshape(-1)
    if w.shape[0] != n:
        raise ValidationError(f"weights has length {w.shape[0]}, expected {n}")
    neg = np.flatnonzero(~(w >= 0))
    if neg.size:
        raise ValidationError(f"negative or invalid weight at index {neg[0]}")
    if not s >= 0:
        raise ValidationError(f"exponent s must be nonnegative, got {s}")

    lo = hi = None
    if cells is not None:
        if points is None:
            raise ValidationError("cells require coordinates")
        lo = np.asarray(cells[0], dtype=float).reshape(points.shape)
        hi = np.asarray(cells[1], dtype=float).reshape(points.shape)
        bad = np.flatnonzero(np.any(lo > points, axis=1) | np.any(hi < points, axis=1))
        if bad.size:
            raise ValidationError(f"point {bad[0]} lies outside its cell")

    comp = tuple(sorted((float(u), float(c)) for u, c in comparability))
    cloud = PointCloud(
        weights=w.copy(), s=float(s), points=points, matrix=mat, label=label,
        cells_lo=lo, cells_hi=hi, comparability=comp, intervals=intervals,
    )
    _check_triangle(cloud, seed)
    return cloud


def _check_triangle(cloud: PointCloud, seed: int) -> None:
    n = len(cloud)
    if n < 3:
        return
    if n ** 3 <= _TRIANGLE_SAMPLES:
        grid = np.array(np.meshgrid(np.arange(n), np.arange(n), np.arange(n), indexing="ij"))
        triples = grid.reshape(3, -1).T
    else:
        rng = np.random.default_rng(seed)
        triples = rng.integers(0, n, size=(_TRIANGLE_SAMPLES, 3))
    i, j, k = triples.T
    if cloud.points is None:
        dij, djk, dik = cloud.matrix[i, j], cloud.matrix[j, k], cloud.matrix[i, k]
    else:
        p = cloud.points
        dij, djk, dik = _norm(p[i] - p[j]), _norm(p[j] - p[k]), _norm(p[i] - p[k])
    scale = np.maximum(dik, 1.0)
    bad = np.flatnonzero(dik > dij + djk + 1e-12 * scale)
    if bad.size:
        t = triples[bad[0]]
        raise ValidationError(f"triangle inequality fails on triple {tuple(int(v) for v in t)}")


@dataclass(frozen=True)
class Net:
    scale_index: int
    separation: float
    member_indices: np.ndarray

    def __len__(self) -> int:
        return int(self.member_indices.size)


@dataclass(frozen=True)
class NetHierarchy:
    nets: tuple
    nested: bool
    n_min: int = 0

    @property
    def n_max(self) -> int:
        return self.n_min + len(self.nets) - 1

    def level(self, n: int) -> Net:
        return self.nets[n - self.n_min]

    def levels(self) -> range:
        return range(self.n_min, self.n_max + 1)


def _order(n: int, candidates, order_seed) -> np.ndarray:
    base = np.arange(n) if candidates is None else np.asarray(candidates, dtype=int)
    if order_seed is None:
        return base
    return base[np.random.default_rng(order_seed).permutation(base.size)]


def greedy_net_indices(cloud: PointCloud, separation: float, order, preset=()) -> np.ndarray:
    """Greedy sweep over ``order``: admit a point iff it is at distance
    >= separation from everything admitted so far. ``preset`` members are
    admitted before the sweep. Returns admitted indices, sorted."""
    if not separation > 0:
        raise ValidationError(f"separation must be positive, got {separation}")
    order = np.asarray(order, dtype=int)
    blocked = np.zeros(len(cloud), dtype=bool)
    admitted: list[int] = []

    def admit(i: int) -> None:
        admitted.append(i)
        near = cloud.within(i, separation, strict=True)
        blocked[near] = True

    for i in np.asarray(preset, dtype=int):
        if blocked[i]:
            raise ValidationError(f"preset member {int(i)} is closer than {separation} to another")
        admit(int(i))
    for i in order:
        if not blocked[i]:
            admit(int(i))
    return np.array(sorted(admitted), dtype=int)


def greedy_maximal_net(cloud: PointCloud, separation: float, order_seed=None, scale_index: int = 0) -> Net:
    """Maximal ``separation``-separated subset by a greedy sweep.

    The sweep visits points in ascending index order, or in a seeded random
    permutation when ``order_seed`` is given.
    """
    members = greedy_net_indices(cloud, separation, _order(len(cloud), None, order_seed))
    return Net(scale_index, float(separation), members)


def check_net(cloud: PointCloud, net: Net, universe=None) -> tuple[bool, bool]:
    """Exhaustive (separated, maximal) check of a net within ``universe``."""
    members = net.member_indices
    sep = net.separation
    separated = True
    for start in range(0, members.size, 512):
        block = members[start:start + 512]
        d = cloud.pairwise(block, members)
        for r, i in enumerate(block):
            d[r, np.searchsorted(members, i)] = np.inf
        if np.any(d < sep):
            separated = False
            break
    pts = np.arange(len(cloud)) if universe is None else np.asarray(universe, dtype=int)
    pts = pts[~np.isin(pts, members)]
    maximal = True
    for start in range(0, pts.size, 512):
        block = pts[start:start + 512]
        if members.size == 0 or np.any(cloud.pairwise(block, members).min(axis=1) >= sep):
            maximal = False
            break
    return separated, maximal


def min_separation(cloud: PointCloud) -> float:
    n = len(cloud)
    if n < 2:
        return math.inf
    if cloud.points is None:
        return float((cloud.matrix + np.diag(np.full(n, np.inf))).min())
    d, _ = cloud.tree.query(cloud.points, k=2)
    return float(d[:, 1].min())


def default_depth(cloud: PointCloud, cap: int = 60) -> int:
    """Smallest n with 2^-n below the minimal point separation: the net at
    that scale is the whole cloud, so finer levels add nothing."""
    sep = min_separation(cloud)
    if math.isinf(sep):
        return 0
    n = max(0, math.floor(-math.log2(sep)) + 1)
    while 2.0 ** -n >= sep:
        n += 1
    return min(n, cap)


def build_net_hierarchy(
    cloud: PointCloud,
    n_min: int = 0,
    n_max: int | None = None,
    nested: bool = False,
    order_seed=None,
) -> NetHierarchy:
    """Nets X_n of separation 2^-n for n_min..n_max.

    With ``nested`` each level's sweep starts from the previous level's
    members, so X_n is contained in X_{n+1}.
    """
    if n_max is None:
        n_max = max(n_min, default_depth(cloud))
    if n_min > n_max:
        raise ValidationError(f"n_min={n_min} exceeds n_max={n_max}")
    order = _order(len(cloud), None, order_seed)
    nets = []
    prev = np.array([], dtype=int)
    for n in range(n_min, n_max + 1):
        sep = 2.0 ** -n
        members = greedy_net_indices(cloud, sep, order, preset=prev if nested else ())
        nets.append(Net(n, sep, members))
        prev = members
    return NetHierarchy(tuple(nets), nested, n_min)


def estimate_doubling_constant(cloud: PointCloud, scale_list: Sequence[float], centers=None) -> int:
    """Largest greedy r-separated subset of a ball B(x, r) over the sampled
    balls. A maximal r-separated set in B(x, r) has bounded size exactly
    when the space is doubling, so this is a witness for C."""
    scales = [float(r) for r in scale_list]
    if not scales:
        raise ValidationError("scale_list is empty")
    if any(not r > 0 for r in scales):
        raise ValidationError("scales must be positive")
    centers = np.arange(len(cloud)) if centers is None else np.asarray(centers, dtype=int)
    best = 0
    for r in scales:
        for x in centers:
            members = cloud.within(int(x), r)
            best = max(best, greedy_net_indices(cloud, r, members).size)
    return best


def set_distance_normalized(E_indices, F_indices, B: Ball, cloud: PointCloud) -> float:
    """(2 / diam B) * max(sup_{E cap B} dist(., F), sup_{F cap B} dist(., E))."""
    E = np.unique(np.asarray(E_indices, dtype=int))
    F = np.unique(np.asarray(F_indices, dtype=int))
    if E.size == 0 or F.size == 0:
        raise UndefinedDistanceError("set distance needs two nonempty sets")
    dE = cloud.distances_from(B.center, E)
    dF = cloud.distances_from(B.center, F)
    EB, FB = E[dE <= B.radius], F[dF <= B.radius]
    if EB.size == 0 or FB.size == 0:
        raise UndefinedDistanceError("one of the sets misses the ball")
    one = cloud.pairwise(EB, F).min(axis=1).max()
    two = cloud.pairwise(FB, E).min(axis=1).max()
    return float(2.0 / B.diameter * max(one, two))

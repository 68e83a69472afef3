"""Deterministic generators for the standard test sets.

Every generator samples each generation-depth cell at its center and gives
it the natural-measure mass of the cell. Cells are kept on the cloud as
boxes so content estimates can certify lower bounds. One-dimensional sets
also carry their exact interval union.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .errors import ValidationError
from .intervals import IntervalUnion
from .metric import PointCloud, build_point_cloud

KINDS = ("en", "cantor", "four_corner", "parallel_segments", "interval_grid")


@dataclass(frozen=True)
class FractalSpec:
    kind: str
    depth: int = 1
    params: dict = field(default_factory=dict)

    def validate(self) -> None:
        if self.kind not in KINDS:
            raise ValidationError(f"unknown fractal kind {self.kind!r}; expected one of {KINDS}")
        if self.kind != "interval_grid" and (not isinstance(self.depth, (int, np.integer)) or self.depth < 1):
            raise ValidationError(f"depth must be an integer >= 1, got {self.depth!r}")
        if self.kind == "cantor":
            lam = _ratio(self.params.get("lam", Fraction(1, 3)))
            if not 0 < lam <= Fraction(1, 2):
                raise ValidationError(f"lam must lie in (0, 1/2], got {lam}")
        if self.kind == "parallel_segments":
            if not float(self.params.get("h", 0)) > 0:
                raise ValidationError("h must be positive")
        if self.kind == "interval_grid":
            if int(self.params.get("n_points", 0)) < 2:
                raise ValidationError("n_points must be at least 2")


def _ratio(lam) -> Fraction:
    if isinstance(lam, Fraction):
        return lam
    if isinstance(lam, str):
        return Fraction(lam)
    # floats like 0.333... are meant as the nearby simple rational
    return Fraction(str(lam)).limit_denominator(10**6)


def generate_fractal(spec: FractalSpec) -> PointCloud:
    spec.validate()
    p = spec.params
    if spec.kind == "en":
        return en(spec.depth)
    if spec.kind == "cantor":
        return cantor(p.get("lam", Fraction(1, 3)), spec.depth)
    if spec.kind == "four_corner":
        return four_corner(spec.depth)
    if spec.kind == "parallel_segments":
        return parallel_segments(float(p["h"]), spec.depth)
    return interval_grid(int(p["n_points"]))


def _line_cloud(intervals, weights, s, label, comparability) -> PointCloud:
    lo = np.array([float(a) for a, _ in intervals])
    hi = np.array([float(b) for _, b in intervals])
    centers = np.array([float((a + b) / 2) for a, b in intervals])
    return build_point_cloud(
        centers[:, None], weights, s, label=label,
        cells=(lo[:, None], hi[:, None]),
        comparability=comparability,
        intervals=IntervalUnion(intervals),
    )


def en_intervals(n: int) -> list[tuple[Fraction, Fraction]]:
    """Every other dyadic interval of length 2^-n in [0, 1]."""
    step = Fraction(1, 2**n)
    return [((2 * k - 1) * step, 2 * k * step) for k in range(1, 2 ** (n - 1) + 1)]


def en(n: int) -> PointCloud:
    if n < 1:
        raise ValidationError(f"n must be >= 1, got {n}")
    ivs = en_intervals(n)
    # length is exactly H^1, and H^1(U cap E_n) <= diam U for any U
    return _line_cloud(ivs, np.full(len(ivs), 2.0**-n), 1.0, f"E_{n}", [(math.inf, 1.0)])


def cantor_intervals(lam, depth: int) -> list[tuple[Fraction, Fraction]]:
    lam = _ratio(lam)
    ivs = [(Fraction(0), Fraction(1))]
    for _ in range(depth):
        nxt = []
        for a, b in ivs:
            w = (b - a) * lam
            nxt.append((a, a + w))
            nxt.append((b - w, b))
        ivs = nxt
    return ivs


def cantor(lam, depth: int) -> PointCloud:
    lam = _ratio(lam)
    FractalSpec("cantor", depth, {"lam": lam}).validate()
    s = math.log(2) / math.log(1 / float(lam))
    ivs = cantor_intervals(lam, depth)
    # for lam <= 1/3 the gap after a generation-k interval is at least its
    # length, so mu(U) <= diam(U)^s for every U
    comp = [(math.inf, 1.0)] if lam <= Fraction(1, 3) else []
    return _line_cloud(ivs, np.full(len(ivs), 2.0**-depth), s, f"cantor({lam})@{depth}", comp)


def four_corner(depth: int) -> PointCloud:
    """Four-corner set: keep the four corner squares of side 1/4, repeat."""
    FractalSpec("four_corner", depth).validate()
    corners = np.zeros((1, 2))
    side = 1.0
    for _ in range(depth):
        side_next = side / 4
        offs = np.array(list(itertools.product((0.0, 3 * side_next), repeat=2)))
        corners = (corners[:, None, :] + offs[None, :, :]).reshape(-1, 2)
        side = side_next
    # distinct generation-k squares are at least 2*4^-k apart, which gives
    # mu(U) <= 2 diam(U) for every U
    return build_point_cloud(
        corners + side / 2, np.full(corners.shape[0], 4.0**-depth), 1.0,
        label=f"four_corner@{depth}", cells=(corners, corners + side),
        comparability=[(math.inf, 2.0)],
    )


def parallel_segments(h: float, depth: int) -> PointCloud:
    """Two unit segments [0,1]x{0} and [0,1]x{h}, cells of length 2^-depth."""
    FractalSpec("parallel_segments", depth, {"h": h}).validate()
    m = 2**depth
    left = np.arange(m) / m
    lo = np.concatenate([np.c_[left, np.zeros(m)], np.c_[left, np.full(m, h)]])
    hi = lo + np.array([1.0 / m, 0.0])
    pts = (lo + hi) / 2
    # a set narrower than h meets one segment only
    return build_point_cloud(
        pts, np.full(2 * m, 1.0 / m), 1.0, label=f"parallel({h})@{depth}",
        cells=(lo, hi), comparability=[(h, 1.0), (math.inf, 2.0)],
    )


def interval_grid(n_points: int) -> PointCloud:
    """Grid k/(N-1) on [0,1], each point owning the half-way cell."""
    FractalSpec("interval_grid", 1, {"n_points": n_points}).validate()
    N = n_points
    ivs = []
    for k in range(N):
        a = max(Fraction(0), Fraction(2 * k - 1, 2 * (N - 1)))
        b = min(Fraction(1), Fraction(2 * k + 1, 2 * (N - 1)))
        ivs.append((a, b))
    w = np.array([float(b - a) for a, b in ivs])
    pts = np.arange(N) / (N - 1)
    lo = np.array([float(a) for a, _ in ivs])
    hi = np.array([float(b) for _, b in ivs])
    return build_point_cloud(
        pts[:, None], w, 1.0, label=f"grid({N})", cells=(lo[:, None], hi[:, None]),
        comparability=[(math.inf, 1.0)], intervals=IntervalUnion([(0, 1)]),
    )


def check_ahlfors_regularity(cloud: PointCloud, s: float | None = None, radii=None, centers=None) -> dict:
    """Empirical C0: max over sampled (x, r) of max(r^s/mu(B), mu(B)/r^s)."""
    s = cloud.s if s is None else float(s)
    if radii is None:
        diam = cloud.diameter()
        radii = [2.0**-k for k in range(0, 40) if 2.0**-k <= diam and 2.0**-k > cloud.atom_diameters.max(initial=0)]
    radii = [float(r) for r in radii]
    centers = np.arange(len(cloud)) if centers is None else np.asarray(centers, dtype=int)
    worst, where = 0.0, None
    for r in radii:
        for x in centers:
            m = cloud.mass(cloud.within(int(x), r))
            if m <= 0:
                val = math.inf
            else:
                val = max(r**s / m, m / r**s)
            if val > worst:
                worst, where = val, (int(x), r)
    return {"C0": worst, "worst_center": None if where is None else where[0],
            "worst_radius": None if where is None else where[1], "s": s, "radii": radii}

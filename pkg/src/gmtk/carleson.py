"""Weak-lower-density flags, cube classification and Carleson sums.

Every flag is one-sided sound: a pair or cube is flagged only when a
concrete witness ball has a certified content bound on the correct side of
the threshold. Unflagged means "not found bad at this resolution".
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .content import content_bounds_quick, content_greedy, content_intervals_exact, content_mass_lower
from .cubes import CubeTree, select_J, thin_nets
from .errors import ValidationError
from .fractals import en
from .intervals import as_fraction
from .metric import Ball, NetHierarchy, PointCloud, build_net_hierarchy

LN2 = math.log(2)


def dyadic_radii(r_min: float, r_max: float) -> list[float]:
    """Dyadic r = 2^-k with r_min < r <= r_max, largest first."""
    if not r_min > 0:
        raise ValidationError(f"r_min must be positive, got {r_min}")
    out = []
    k = math.floor(-math.log2(r_max)) - 1
    while True:
        r = 2.0**-k
        if r <= r_min:
            break
        if r <= r_max:
            out.append(r)
        k += 1
    return out


def witness_radii(r: float, epsilon: float, s: float) -> list[float]:
    """Sampled inner radii t < r, descending: 2^-k and 3 2^-(k+1) above
    eps^(1/s) r. Below that the WLD threshold is negative and nothing can
    be flagged."""
    floor = epsilon ** (1 / s) * r if s > 0 else 0.0
    ts = []
    k = math.floor(-math.log2(r)) - 1
    while True:
        t = 2.0**-k
        if t <= floor:
            break
        for v in (t, 0.75 * t):
            if floor < v < r:
                ts.append(v)
        k += 1
        if k > 200:
            break
    return sorted(set(ts), reverse=True)


def _content_method(cloud: PointCloud, method: str, s: float) -> str:
    if method == "auto":
        return "interval_exact" if cloud.intervals is not None and s == 1 and cloud.dim == 1 else "greedy"
    if method == "interval_exact" and (cloud.intervals is None or s != 1):
        raise ValidationError("interval_exact needs a one-dimensional cloud with intervals and s = 1")
    if method not in ("interval_exact", "greedy"):
        raise ValidationError(f"unknown content method {method!r}")
    return method


def _candidates(cloud: PointCloud, center, r: float, first: int | None) -> np.ndarray:
    ys = cloud.within(center, r)
    if first is not None and first in set(ys.tolist()):
        ys = np.r_[first, ys[ys != first]]
    return ys


def _find_witness(cloud: PointCloud, center, first, r_out: float, scale: float, epsilon: float,
                  s: float, method: str):
    """Search y in X cap B(center, r_out), t < r_out with
    H^s_inf(X cap B(y, t)) < (2t)^s - epsilon (2 scale)^s.

    Returns (y, t, certified upper bound) or None.
    """
    ys = _candidates(cloud, center, r_out, first)
    ts = witness_radii(r_out, epsilon * (scale / r_out) ** s if s > 0 else epsilon, s)
    if ys.size == 0 or not ts:
        return None
    pen = epsilon * (2 * scale) ** s
    if method == "interval_exact":
        y = cloud.points[ys, 0]
        T = np.array(ts)
        a = (y[:, None] - T[None, :]).ravel()
        b = (y[:, None] + T[None, :]).ravel()
        lengths = cloud.intervals.clip_lengths_float(a, b).reshape(y.size, T.size)
        thr = 2 * T[None, :] - pen
        hits = np.argwhere(lengths < thr + 1e-9 * (1 + np.abs(thr)))
        pen_x = as_fraction(epsilon) * (2 * as_fraction(scale))
        for i, k in hits:
            yf, tf = as_fraction(float(y[i])), as_fraction(float(T[k]))
            est = content_intervals_exact(cloud.intervals, (yf - tf, yf + tf))
            if est.value < 2 * tf - pen_x:
                return int(ys[i]), float(T[k]), est.value
        return None
    for yi in ys:
        for t in ts:
            thr = (2 * t) ** s - pen
            low, up = content_bounds_quick(cloud, None, s, math.inf, window=Ball(int(yi), t))
            if low >= thr:
                continue
            if up < thr:
                return int(yi), t, up
            est = content_greedy(cloud, None, s, math.inf, window=Ball(int(yi), t))
            if est.upper < thr:
                return int(yi), t, est.upper
    return None


@dataclass
class PairGrid:
    xs: np.ndarray                  # cloud indices
    radii: np.ndarray               # dyadic radii, descending
    flags: np.ndarray               # bool (len(xs), len(radii))
    witnesses: dict = field(default_factory=dict)  # (ix, ir) -> (y, t, upper)
    epsilon: float | None = None
    method: str | None = None

    def flagged_pairs(self) -> list[tuple[int, float]]:
        return [(int(self.xs[i]), float(self.radii[k])) for i, k in np.argwhere(self.flags)]


def make_pair_grid(cloud: PointCloud, r_min: float, r_max: float, xs=None) -> PairGrid:
    xs = np.arange(len(cloud)) if xs is None else np.asarray(xs, dtype=int)
    radii = np.array(dyadic_radii(r_min, r_max))
    return PairGrid(xs, radii, np.zeros((xs.size, radii.size), dtype=bool))


def wld_bad_pairs(cloud: PointCloud, epsilon: float, grid: PairGrid, content_method: str = "auto",
                  s: float | None = None) -> PairGrid:
    """Flag (x, r) when some sampled y in X cap B(x, r), t < r satisfies
    H^s_inf(X cap B(y, t)) < (2t)^s - eps (2r)^s with a certified upper
    bound. The witness search tries y = x first."""
    if not epsilon > 0:
        raise ValidationError(f"epsilon must be positive, got {epsilon}")
    s = cloud.s if s is None else float(s)
    method = _content_method(cloud, content_method, s)
    flags = np.zeros((grid.xs.size, grid.radii.size), dtype=bool)
    wit = {}
    for i, x in enumerate(grid.xs):
        for k, r in enumerate(grid.radii):
            w = _find_witness(cloud, int(x), int(x), float(r), float(r), epsilon, s, method)
            if w is not None:
                flags[i, k] = True
                wit[(i, k)] = w
    return PairGrid(grid.xs, grid.radii, flags, wit, epsilon, method)


def verify_witness(cloud: PointCloud, pair: tuple, witness: tuple, epsilon: float, s: float | None = None) -> bool:
    """Re-check a WLD witness with an independent content evaluation."""
    s = cloud.s if s is None else float(s)
    x, r = pair
    y, t, _ = witness
    if cloud.distances_from(int(x), [y])[0] > r or not 0 < t < r:
        return False
    thr = (2 * t) ** s - epsilon * (2 * r) ** s
    if cloud.intervals is not None and s == 1:
        c = float(cloud.points[y, 0])
        return cloud.intervals.clip_length(c - t, c + t) < as_fraction(2 * t) - as_fraction(epsilon) * 2 * as_fraction(r)
    return content_greedy(cloud, None, s, math.inf, window=Ball(int(y), t)).upper < thr


@dataclass
class CarlesonReport:
    value: float
    integral: float
    argmax: tuple | None
    table: list
    r_min: float
    r_max: float
    s: float
    weight: float = LN2

    def to_dict(self) -> dict:
        return {"value": self.value, "integral": self.integral,
                "argmax": list(self.argmax) if self.argmax else None,
                "r_min": self.r_min, "r_max": self.r_max, "s": self.s,
                "dr_over_r_weight": self.weight,
                "table": [{"x": list(np.atleast_1d(x).tolist()) if not isinstance(x, int) else x,
                           "R": R, "integral": I, "normalized": v} for x, R, I, v in self.table]}


def carleson_norm(grid: PairGrid, cloud: PointCloud, s: float | None = None, r_min: float | None = None,
                  r_max: float | None = None, witnesses=None) -> CarlesonReport:
    """Truncated Carleson norm of the flagged pair set.

    For each sampled (x, R): R^-s sum over dyadic levels r_min < r <= R of
    ln 2 * mu({y in B(x, R): (y, r) flagged}). Each dyadic level stands for
    the band (r/2, r], whose dr/r measure is ln 2.
    """
    s = cloud.s if s is None else float(s)
    r_min = float(grid.radii.min()) / 2 if r_min is None else float(r_min)
    r_max = float(grid.radii.max()) if r_max is None else float(r_max)
    if not r_min > 0:
        raise ValidationError(f"r_min must be positive, got {r_min}")
    if witnesses is None:
        witnesses = [(int(x), float(R)) for x in grid.xs for R in grid.radii if R <= r_max]
    pos = {int(x): i for i, x in enumerate(grid.xs)}
    table = []
    best, arg, best_int = 0.0, None, 0.0
    for x, R in witnesses:
        ball = cloud.within(x, R)
        rows = [pos[y] for y in ball.tolist() if y in pos]
        total = []
        for k, r in enumerate(grid.radii):
            if r_min < r <= min(R, r_max) and rows:
                fl = [grid.xs[i] for i in rows if grid.flags[i, k]]
                if fl:
                    total.append(LN2 * cloud.mass(fl))
        integral = math.fsum(total)
        val = integral / R**s
        table.append((x, R, integral, val))
        if val > best or arg is None:
            best, arg, best_int = val, (x if isinstance(x, int) else tuple(np.atleast_1d(x).tolist()), R), integral
    return CarlesonReport(best, best_int, arg, table, r_min, r_max, s)


# ---------------------------------------------------------------- cubes

@dataclass
class CubeClassification:
    labels: dict
    params: dict
    b1_witness: dict = field(default_factory=dict)
    b2_bounds: dict = field(default_factory=dict)
    g_certified: dict = field(default_factory=dict)

    def ids(self, *labels: str) -> list[int]:
        return sorted(q for q, lab in self.labels.items() if lab in labels)

    def b1(self) -> list[int]:
        return self.ids("B1", "B1∩B2")

    def b2(self) -> list[int]:
        return self.ids("B2", "B1∩B2")

    def good(self) -> list[int]:
        return self.ids("G")


def _ball_content_bounds(cloud: PointCloud, center, r: float, s: float, delta: float) -> tuple:
    if cloud.intervals is not None and s == 1 and cloud.dim == 1:
        c = float(cloud.center_coords(center)[0])
        v = content_intervals_exact(cloud.intervals, (as_fraction(c) - as_fraction(r), as_fraction(c) + as_fraction(r)), delta).value
        return v, v
    est = content_greedy(cloud, None, s, delta, window=Ball(center, r))
    return est.lower, est.upper


def classify_cubes(tree: CubeTree, cloud: PointCloud | None, A: float, epsilon: float, rho: float,
                   s: float | None = None, content_method: str = "auto") -> CubeClassification:
    """Label cubes G / B1 / B2 / B1∩B2 with r_Q the radius of B_Q.

    B2: certified lower bound of H^s_{rho r_Q}(X cap A B_Q) above
    (1+eps)(2 A r_Q)^s. B1: a witness y in X cap A B_Q, r < A r_Q with
    certified H^s_inf(X cap B(y, r)) < (2r)^s - eps (2 A r_Q)^s.
    """
    if not A >= 1:
        raise ValidationError(f"A must be >= 1, got {A}")
    for name, v in (("epsilon", epsilon), ("rho", rho)):
        if not 0 < v < 1:
            raise ValidationError(f"{name} must lie in (0, 1), got {v}")
    cloud = tree.cloud if cloud is None else cloud
    s = cloud.s if s is None else float(s)
    method = _content_method(cloud, content_method, s)
    labels, wit, b2b, gc = {}, {}, {}, {}
    for q in tree.cubes:
        rq = q.radius
        thr2 = (1 + epsilon) * (2 * A * rq) ** s
        low, up = _ball_content_bounds(cloud, q.center, A * rq, s, rho * rq)
        b2 = low > thr2
        b2b[q.id] = (low, up, thr2)
        w = _find_witness(cloud, q.center, q.center, A * rq, A * rq, epsilon, s, method)
        b1 = w is not None
        if b1:
            wit[q.id] = w
        labels[q.id] = "B1∩B2" if b1 and b2 else "B1" if b1 else "B2" if b2 else "G"
        gc[q.id] = (not b1) and (not b2) and up <= thr2
    params = {"A": A, "epsilon": epsilon, "rho": rho, "s": s, "method": method}
    return CubeClassification(labels, params, wit, b2b, gc)


def packing_sum(tree: CubeTree, subset, root: int, s: float | None = None) -> tuple[float, float]:
    """Sum of side(Q)^s over subset cubes contained in the root, and the
    ratio to side(root)^s."""
    s = (tree.cloud.s if tree.cloud is not None else 1.0) if s is None else float(s)
    by_id = {q.id: q for q in tree.cubes}
    if root not in by_id:
        raise ValidationError(f"root {root} is not a cube of the tree")
    R = by_id[root]
    rset = set(R.members.tolist())
    terms = []
    for qid in sorted(set(subset)):
        q = by_id[qid]
        if q.level >= R.level and set(q.members.tolist()) <= rset:
            terms.append(q.side**s)
    total = math.fsum(terms)
    return total, total / R.side**s


# ---------------------------------------------------------------- main packing sum

@dataclass
class MainSum:
    lhs: float
    mass: float
    ratio: float
    N: int
    J: int
    count: int
    per_level: dict
    lhs_upper: float | None = None
    params: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        out = {"lhs": self.lhs, "mass": self.mass, "ratio": self.ratio, "N": self.N, "J": self.J,
               "count": self.count, "per_level": {str(k): v for k, v in self.per_level.items()}}
        if self.lhs_upper is not None:
            out["lhs_upper"] = self.lhs_upper
        out["params"] = self.params
        return out


def ball_content_lower(cloud: PointCloud, x: int, r: float, A: float, rho: float, s: float) -> float:
    """Certified lower bound of H^s_{rho r}(X cap B(x, A r))."""
    if cloud.intervals is not None and s == 1 and cloud.dim == 1:
        return _ball_content_bounds(cloud, int(x), A * r, s, rho * r)[0]
    return content_mass_lower(cloud, None, s, rho * r, window=Ball(int(x), A * r)).lower


def theorem_main_sum(cloud: PointCloud, s: float | None, A: float, epsilon: float, rho: float,
                     hierarchy: NetHierarchy | None = None, bracket: bool = False) -> MainSum:
    """Sum of r_B^s over B = B(x, 2^-n), x in X_n, whose certified content
    lower bound satisfies H^s_{rho r}(X cap AB) > (1+eps)(2r)^s.

    With ``bracket`` the sum over balls whose upper bound exceeds the
    threshold is also returned; the true sum lies between the two.
    """
    s = cloud.s if s is None else float(s)
    for name, v in (("epsilon", epsilon), ("rho", rho)):
        if not 0 < v < 1:
            raise ValidationError(f"{name} must lie in (0, 1), got {v}")
    if not A > 0:
        raise ValidationError(f"A must be positive, got {A}")
    if hierarchy is None:
        hierarchy = build_net_hierarchy(cloud, 0)
    exact = cloud.intervals is not None and s == 1 and cloud.dim == 1
    terms, per_level, up_terms, count = [], {}, [], 0
    for n in hierarchy.levels():
        r = 2.0**-n
        thr = (1 + epsilon) * (2 * r) ** s
        lvl = []
        for x in hierarchy.level(n).member_indices:
            low = up = ball_content_lower(cloud, int(x), r, A, rho, s)
            if not exact:
                up = None
                if bracket:
                    up = content_greedy(cloud, None, s, rho * r, window=Ball(int(x), A * r)).upper
            if low > thr:
                lvl.append(r**s)
                count += 1
            if bracket and up > thr:
                up_terms.append(r**s)
        per_level[n] = math.fsum(lvl)
        terms.extend(lvl)
    lhs = math.fsum(terms)
    mass = cloud.total_mass
    A_ = max(A, 1.0)
    fam = thin_nets(cloud, hierarchy, A_, epsilon, rho, s) if hierarchy.n_min == 0 else None
    return MainSum(lhs, mass, lhs / mass if mass > 0 else math.inf,
                   fam.N if fam else 0, select_J(epsilon, rho, s), count, per_level,
                   math.fsum(up_terms) if bracket else None,
                   {"s": s, "A": A, "epsilon": epsilon, "rho": rho,
                    "n_min": hierarchy.n_min, "n_max": hierarchy.n_max})


# ---------------------------------------------------------------- E_n scan

@dataclass
class ScanRow:
    n: int
    exact: float
    exact_mass: Fraction
    sampled: float
    all_flagged: bool
    n_pairs: int

    def to_dict(self) -> dict:
        return {"n": self.n, "exact": self.exact, "mass_in_ball": str(self.exact_mass),
                "sampled": self.sampled, "all_flagged": self.all_flagged, "pairs": self.n_pairs}


def counterexample_scan(n_list, epsilon: float = 0.2, R: float = 0.5, x_center: float = 0.5) -> list[ScanRow]:
    """Truncated Carleson integral of the WLD-bad set of E_n at (x, R).

    Exact: H^1(E_n cap B(x, R)) ln(R 2^n), valid when the whole band
    E_n x (2^-n, R] is flagged. Sampled: flags from the witness search
    and the dyadic Riemann sum of the integral.
    """
    if epsilon >= 1 / 3:
        warnings.warn("epsilon >= 1/3: E_n x (2^-n, 1) need not be WLD-bad", stacklevel=2)
    rows = []
    for n in n_list:
        cloud = en(int(n))
        xf, Rf = as_fraction(x_center), as_fraction(R)
        if not cloud.intervals.contains(xf):
            raise ValidationError(f"x_center={x_center} is not a point of E_{n}")
        mass = cloud.intervals.clip_length(xf - Rf, xf + Rf)
        band = math.log(R * 2**n) if R > 2.0**-n else 0.0
        exact = float(mass) * band
        if R <= 2.0**-n:
            rows.append(ScanRow(int(n), 0.0, mass, 0.0, True, 0))
            continue
        grid = make_pair_grid(cloud, 2.0**-n, max(R, 0.5))
        grid = wld_bad_pairs(cloud, epsilon, grid, "interval_exact")
        band_cols = grid.radii < 1
        rep = carleson_norm(grid, cloud, 1.0, 2.0**-n, R, witnesses=[(np.array([x_center]), R)])
        rows.append(ScanRow(int(n), exact, mass, rep.integral, bool(grid.flags[:, band_cols].all()),
                            int(grid.flags.size)))
    return rows

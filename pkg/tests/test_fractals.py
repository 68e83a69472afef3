import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from gmtk.errors import ValidationError
from gmtk.fractals import (
    FractalSpec,
    cantor,
    cantor_intervals,
    check_ahlfors_regularity,
    en,
    en_intervals,
    four_corner,
    generate_fractal,
    interval_grid,
    parallel_segments,
)

F = Fraction


def test_e3_intervals():
    assert en_intervals(3) == [(F(1, 8), F(2, 8)), (F(3, 8), F(4, 8)), (F(5, 8), F(6, 8)), (F(7, 8), F(1))]
    c = en(3)
    assert c.total_mass == 0.5 and c.intervals.length == F(1, 2)


def test_cantor_depth2():
    assert cantor_intervals(F(1, 3), 2) == [(F(0), F(1, 9)), (F(2, 9), F(1, 3)), (F(2, 3), F(7, 9)), (F(8, 9), F(1))]
    c = cantor("1/3", 2)
    assert c.weights.tolist() == [0.25] * 4
    assert c.s == pytest.approx(math.log(2) / math.log(3), rel=1e-15)


def test_four_corner_depth1():
    c = four_corner(1)
    assert np.array_equal(c.weights, np.full(4, 0.25))
    assert np.allclose(c.cells_hi - c.cells_lo, 0.25)
    lo = sorted(map(tuple, c.cells_lo.tolist()))
    assert lo == [(0.0, 0.0), (0.0, 0.75), (0.75, 0.0), (0.75, 0.75)]


def test_parallel_segments_shape():
    c = parallel_segments(0.01, 4)
    assert len(c) == 32 and c.total_mass == 2.0 and c.s == 1.0
    assert set(c.points[:, 1].tolist()) == {0.0, 0.01}


@pytest.mark.parametrize("spec", [
    FractalSpec("cantor", 3, {"lam": 0.6}),
    FractalSpec("cantor", 0, {"lam": 0.25}),
    FractalSpec("parallel_segments", 3, {"h": 0.0}),
    FractalSpec("interval_grid", 1, {"n_points": 1}),
    FractalSpec("sierpinski", 2),
])
def test_invalid_specs(spec):
    with pytest.raises(ValidationError):
        generate_fractal(spec)


def test_dispatch_matches_direct():
    assert np.array_equal(generate_fractal(FractalSpec("en", 4)).points, en(4).points)
    assert np.array_equal(generate_fractal(FractalSpec("cantor", 3, {"lam": "1/4"})).points, cantor("1/4", 3).points)


# ---------------------------------------------------------------- regularity

def _grid_oracle(N, radii):
    """Worst interior-or-endpoint ratio on the closed-ball grid."""
    h = 1.0 / (N - 1)
    worst = 0.0
    for r in radii:
        k = math.floor(r / h + 1e-9)
        for left in range(0, N):
            lo, hi = max(0, left - k), min(N - 1, left + k)
            m = (hi - lo) * h + h / 2 * ((lo > 0) + (hi < N - 1))
            worst = max(worst, m / r, r / m)
    return worst


def test_interval_grid_c0():
    g = interval_grid(257)
    rep = check_ahlfors_regularity(g)
    assert rep["C0"] == pytest.approx(_grid_oracle(257, rep["radii"]), rel=1e-12)
    # interior balls hold 2r, the grid adds one spacing over the smallest radius
    assert rep["C0"] <= 2 + (1 / 256) / min(rep["radii"]) + 1e-12
    coarse = check_ahlfors_regularity(g, radii=[0.25, 0.5])
    assert coarse["C0"] <= 2 + 4 / 256


def test_cantor_c0_stable():
    vals = [check_ahlfors_regularity(cantor("1/3", d))["C0"] for d in (6, 7, 8)]
    assert all(math.isfinite(v) for v in vals)
    assert max(vals) / min(vals) < 1.25


@pytest.mark.parametrize("n", [3, 5, 7])
def test_en_c0(n):
    rep = check_ahlfors_regularity(en(n), 1.0, [2.0**-k for k in range(n + 1)])
    assert rep["C0"] <= 4


# ---------------------------------------------------------------- invariants

@pytest.mark.parametrize("depth", range(1, 7))
def test_totals_exact(depth):
    assert en(depth).intervals.length == F(1, 2)
    assert sum(F(b - a) for a, b in en_intervals(depth)) == F(1, 2)
    assert math.fsum(cantor("1/3", depth).weights) == 1.0
    assert math.fsum(four_corner(depth).weights) == 1.0
    assert math.fsum(parallel_segments(0.1, depth).weights) == 2.0


@pytest.mark.parametrize("k", range(1, 7))
def test_self_similarity_exact(k):
    small = [(a * 2, b * 2) for a, b in en_intervals(k + 1) if b <= F(1, 2)]
    assert small == en_intervals(k)
    lam = F(1, 4)
    sub = [(a / lam, b / lam) for a, b in cantor_intervals(lam, k + 1) if b <= lam]
    assert sub == cantor_intervals(lam, k)
    big, base = four_corner(k + 1), four_corner(k)
    corner = big.points[np.all(big.points < 0.25, axis=1)] * 4
    assert np.array_equal(np.unique(corner, axis=0), np.unique(base.points, axis=0))


@settings(max_examples=25, deadline=None)
@given(st.floats(0.05, 0.5), st.integers(1, 6))
def test_self_similarity_float(lam, k):
    lam = F(str(lam)).limit_denominator(1000)
    big, base = cantor(lam, k + 1), cantor(lam, k)
    x = big.points[:, 0]
    sub = np.sort(x[x <= float(lam)] / float(lam))
    assert np.allclose(sub, np.sort(base.points[:, 0]), atol=1e-12)


@settings(max_examples=25, deadline=None)
@given(st.sampled_from(["en", "cantor"]), st.integers(1, 8), st.sampled_from(["1/3", "1/4", "2/5"]))
def test_interval_and_cloud_agree(kind, depth, lam):
    c = en(depth) if kind == "en" else cantor(lam, depth)
    ivs = list(c.intervals)
    assert len(ivs) == len(c)
    x = c.points[:, 0]
    assert all(float(a) <= v <= float(b) for (a, b), v in zip(ivs, np.sort(x)))
    if kind == "en":
        assert math.fsum(c.weights) == float(c.intervals.length)

import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from gmtk.choquet import (
    SimpleFunction,
    check_quasi_subadditivity,
    check_separated_additivity,
    choquet_integral,
    discrete_mass,
    greedy_content,
    interval_content,
    oracle_content,
    support_distance,
)
from gmtk.content import dyadic_interval_pool
from gmtk.errors import UndefinedDistanceError, ValidationError
from gmtk.fractals import en
from gmtk.metric import Ball, build_point_cloud


def _cells(edges):
    """1D cloud whose cells are the given [a, b] pairs."""
    lo = np.array([a for a, _ in edges], dtype=float)
    hi = np.array([b for _, b in edges], dtype=float)
    return build_point_cloud(((lo + hi) / 2)[:, None], hi - lo, 1.0, cells=(lo[:, None], hi[:, None]),
                             comparability=[(math.inf, 1.0)])


def test_zero_function():
    c = en(3)
    assert choquet_integral(np.zeros(len(c)), discrete_mass(c)) == 0.0


def test_half_interval_exact_content():
    c = _cells([(k / 16, (k + 1) / 16) for k in range(16)])
    f = (np.arange(16) < 8).astype(float)
    assert choquet_integral(f, interval_content(c), exact=True) == Fraction(1, 2)


def test_hand_layer_cake():
    # A = {0} with mass 0.2, B = {0, 1} with mass 0.7
    c = build_point_cloud([0.0, 1.0, 2.0], [0.2, 0.5, 0.3], 1.0)
    f = SimpleFunction.make([2, 1], [[0], [0, 1]])
    assert choquet_integral(f, discrete_mass(c)) == pytest.approx(1.1, abs=1e-15)


def test_signed_split():
    c = build_point_cloud([0.0, 1.0], [0.25, 0.75], 1.0)
    assert choquet_integral(np.array([2.0, -1.0]), discrete_mass(c)) == pytest.approx(0.5 - 0.75)


def test_simple_function_json_roundtrip():
    f = SimpleFunction.make([1.5, 2], [[3, 1], [0]])
    g = SimpleFunction.from_json(f.to_json())
    assert g == f and g.carriers[0] == (1, 3)
    with pytest.raises(ValidationError):
        SimpleFunction.make([-1], [[0]])


# ---------------------------------------------------------------- quasi-subadditivity

def test_quasi_constant_ones():
    c = build_point_cloud([0.0], [1.0], 1.0)
    rep = check_quasi_subadditivity(np.ones(1), np.ones(1), discrete_mass(c), 0.5)
    assert rep.lhs == 2 and rep.rhs == 4 and rep.ok


def test_quasi_extreme_gamma():
    c = en(3)
    rep = check_quasi_subadditivity(np.ones(len(c)), np.ones(len(c)), greedy_content(c, 1.0), 0.01)
    assert rep.ok and rep.rhs > 50 * rep.lhs


def test_quasi_rejects_bad_input():
    c = en(2)
    with pytest.raises(ValidationError):
        check_quasi_subadditivity(np.ones(2), np.ones(2), discrete_mass(c), 1.0)
    with pytest.raises(ValidationError):
        check_quasi_subadditivity(-np.ones(2), np.ones(2), discrete_mass(c), 0.5)


def _backends(c):
    return [discrete_mass(c), greedy_content(c, 1.0), oracle_content(c, dyadic_interval_pool(c, 4), 1.0),
            interval_content(c)]


@pytest.mark.parametrize("k", range(4))
def test_quasi_random_sweep(k):
    c = en(4)
    mu = _backends(c)[k]
    rng = np.random.default_rng(100 + k)
    for _ in range(200):
        f = rng.integers(0, 4, len(c)) * rng.random()
        g = rng.integers(0, 4, len(c)) * rng.random()
        gamma = float(rng.choice([0.25, 0.5, 0.75]))
        rep = check_quasi_subadditivity(f, g, mu, gamma)
        assert rep.ok and rep.slack >= 0


def test_backends_monotone_and_subadditive():
    c = en(4)
    rng = np.random.default_rng(7)
    pairs = [(rng.choice(8, 3, replace=False), rng.choice(8, 3, replace=False)) for _ in range(30)]
    for mu in _backends(c):
        assert mu(np.array([], dtype=int)) == 0
        assert mu.check_subadditive(pairs) == []
        assert mu.check_monotone() == []


# ---------------------------------------------------------------- separated additivity

def test_two_atoms_discrete_mass():
    c = build_point_cloud([0.0, 1.0], [0.3, 0.6], 1.0)
    f = SimpleFunction.make([2, 3], [[0], [1]])
    rep = check_separated_additivity(f, discrete_mass(c), c, 0.25)
    assert rep.ok and rep.integral == pytest.approx(2 * 0.3 + 3 * 0.6, abs=1e-15)


def test_two_intervals_capped_content():
    c = _cells([(0.0, 0.2), (0.6, 0.8)])
    mu = interval_content(c, 1.0, 0.2)
    a, b = 2.0, 3.0
    rep = check_separated_additivity(SimpleFunction.make([a, b], [[0], [1]]), mu, c, 0.2)
    assert rep.ok
    assert float(mu([0, 1])) == pytest.approx(0.4, abs=1e-15)
    assert rep.integral == pytest.approx(0.2 * a + 0.2 * b, abs=1e-12)


def test_close_intervals_rejected():
    c = _cells([(0.0, 0.2), (0.3, 0.5)])
    with pytest.raises(ValidationError, match="carriers 0 and 1"):
        check_separated_additivity(SimpleFunction.make([1, 1], [[0], [1]]), interval_content(c, 1.0, 0.2), c, 0.2)


def test_cap_above_rho_rejected():
    c = _cells([(0.0, 0.2), (0.6, 0.8)])
    with pytest.raises(ValidationError):
        check_separated_additivity(SimpleFunction.make([1], [[0]]), interval_content(c, 1.0, 0.5), c, 0.2)


# ---------------------------------------------------------------- support distance

def test_support_distance_examples():
    assert support_distance([0.0, 0.5], [0.0, 0.5], Ball(np.array([0.2]), 1.0)) == 0.0
    assert support_distance([0.0], [1.0], Ball(np.array([0.5]), 1.0)) == pytest.approx(2.0)
    assert support_distance([0.0], [0.0, 0.1], Ball(np.array([0.0]), 1.0)) == pytest.approx(0.1)


def test_support_distance_uses_positive_weights():
    a = build_point_cloud([0.0, 5.0], [1.0, 0.0], 1.0)
    b = build_point_cloud([0.0], [1.0], 1.0)
    assert support_distance(a, b, Ball(np.array([0.0]), 10.0)) == 0.0


def test_support_distance_undefined():
    with pytest.raises(UndefinedDistanceError):
        support_distance([0.0], [3.0], Ball(np.array([0.0]), 1.0))


# ---------------------------------------------------------------- properties

vals = st.lists(st.integers(0, 6), min_size=8, max_size=8)


@settings(max_examples=60, deadline=None)
@given(vals, st.lists(st.floats(0.01, 1.0), min_size=8, max_size=8))
def test_layer_cake_matches_weighted_sum(v, w):
    c = build_point_cloud(np.arange(8.0), w, 1.0)
    f = np.array(v, dtype=float) / 4
    got = choquet_integral(f, discrete_mass(c), exact=True)
    oracle = sum((Fraction(a) * Fraction(b) for a, b in zip(f.tolist(), c.weights.tolist())), Fraction(0))
    assert got == oracle


@settings(max_examples=40, deadline=None)
@given(vals, st.sampled_from([0.0, 0.25, 0.5, 2.0, 8.0]), st.integers(0, 3))
def test_positive_homogeneity(v, k, b):
    c = en(4)
    mu = _backends(c)[b]
    f = np.array(v, dtype=float)
    assert choquet_integral(k * f, mu, exact=True) == Fraction(k) * choquet_integral(f, mu, exact=True)


@settings(max_examples=40, deadline=None)
@given(vals, vals, st.integers(0, 3))
def test_monotone_in_f(v, extra, b):
    c = en(4)
    mu = _backends(c)[b]
    f = np.array(v, dtype=float)
    g = f + np.array(extra, dtype=float)
    assert choquet_integral(f, mu, exact=True) <= choquet_integral(g, mu, exact=True)

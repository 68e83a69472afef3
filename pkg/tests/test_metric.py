import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from gmtk.errors import UndefinedDistanceError, ValidationError
from gmtk.fractals import interval_grid
from gmtk.metric import (
    Ball,
    PointCloud,
    build_net_hierarchy,
    build_point_cloud,
    check_net,
    estimate_doubling_constant,
    greedy_maximal_net,
    set_distance_normalized,
)


def _oracle_greedy(coords, sep, order):
    # plain double loop, no spatial index
    kept = []
    for i in order:
        if all(np.linalg.norm(coords[i] - coords[j]) >= sep for j in kept):
            kept.append(i)
    return sorted(kept)


def test_singleton():
    c = build_point_cloud([[0.0]], [1.0], 1.0)
    assert len(c) == 1 and c.total_mass == 1.0
    assert estimate_doubling_constant(c, [0.5]) == 1
    assert greedy_maximal_net(c, 0.1).member_indices.tolist() == [0]
    h = build_net_hierarchy(c, 0, 4)
    assert all(h.level(n).member_indices.tolist() == [0] for n in h.levels())


def test_collinear_distances():
    c = build_point_cloud([0.0, 0.5, 1.0], [1, 1, 1], 1.0)
    d = c.pairwise([0, 1, 0], [1, 2, 2]).diagonal()
    assert d.tolist() == [0.5, 0.5, 1.0]


def test_asymmetric_matrix_rejected():
    m = np.array([[0, 1, 2], [1, 0, 1], [2, 1.5, 0]])
    with pytest.raises(ValidationError, match=r"\(1, 2\)"):
        build_point_cloud(m, None, 1.0, matrix=True)


def test_bad_weights_rejected():
    with pytest.raises(ValidationError, match="index 1"):
        build_point_cloud([0.0, 1.0], [1.0, -1.0], 1.0)
    with pytest.raises(ValidationError, match="length"):
        build_point_cloud([0.0, 1.0], [1.0], 1.0)


def test_triangle_violation_rejected():
    m = np.array([[0, 1, 5], [1, 0, 1], [5, 1, 0]], dtype=float)
    with pytest.raises(ValidationError, match="triangle"):
        build_point_cloud(m, None, 1.0, matrix=True)


def test_json_roundtrip_exact():
    rng = np.random.default_rng(3)
    c = build_point_cloud(rng.random((20, 2)), rng.random(20), 0.7, label="r")
    back = PointCloud.from_json(c.to_json())
    assert np.array_equal(back.points, c.points)
    assert np.array_equal(back.weights, c.weights)
    assert back.s == c.s and back.label == "r"


def test_doubling_line_grid():
    c = interval_grid(256)
    assert estimate_doubling_constant(c, [1 / 4, 1 / 16]) <= 3


def test_doubling_square_grid():
    g = np.array(list(itertools.product(range(16), range(16)))) / 15.0
    c = build_point_cloud(g, None, 2.0)
    assert estimate_doubling_constant(c, [1 / 4]) <= 9


def test_doubling_empty_scales():
    with pytest.raises(ValidationError):
        estimate_doubling_constant(interval_grid(5), [])


def test_greedy_hand_run():
    c = build_point_cloud([0.0, 0.3, 0.6, 1.0], None, 1.0)
    net = greedy_maximal_net(c, 0.5)
    assert c.points[net.member_indices, 0].tolist() == [0.0, 0.6]


def test_separation_above_diameter():
    c = build_point_cloud([0.2, 0.0, 0.9], None, 1.0)
    assert greedy_maximal_net(c, 5.0).member_indices.tolist() == [0]


def test_grid_hierarchy_nested():
    c = interval_grid(1025)
    coords = c.points
    for nested in (False, True):
        h = build_net_hierarchy(c, 0, 3, nested=nested)
        for n in h.levels():
            assert check_net(c, h.level(n)) == (True, True)
        if nested:
            for n in range(0, 3):
                assert set(h.level(n).member_indices) <= set(h.level(n + 1).member_indices)
    # independent replay of the seeded sweep
    h = build_net_hierarchy(c, 0, 3, nested=True)
    sizes = [len(h.level(n)) for n in h.levels()]
    assert sizes == [2, 3, 5, 9]
    assert h.level(3).member_indices.tolist() == _oracle_greedy(coords, 1 / 8, range(1025))


def test_seeded_hierarchy_invariants():
    c = interval_grid(1025)
    h = build_net_hierarchy(c, 0, 3, nested=True, order_seed=11)
    for n in h.levels():
        assert check_net(c, h.level(n)) == (True, True)
        assert h.level(n).separation == 2.0**-n
    for n in range(3):
        assert set(h.level(n).member_indices) <= set(h.level(n + 1).member_indices)


def test_set_distance_examples():
    c = build_point_cloud([0.0, 1.0, 0.1, 0.5], None, 1.0)
    assert set_distance_normalized([0, 1], [0, 1], Ball(3, 1.0), c) == 0.0
    assert set_distance_normalized([0], [1], Ball(3, 1.0), c) == pytest.approx(1.0)
    assert set_distance_normalized([0], [0, 2], Ball(0, 1.0), c) == pytest.approx(0.1)


def test_set_distance_undefined():
    c = build_point_cloud([0.0, 5.0], None, 1.0)
    with pytest.raises(UndefinedDistanceError):
        set_distance_normalized([0], [1], Ball(0, 1.0), c)


coords = st.lists(st.floats(-1, 1, allow_nan=False), min_size=2, max_size=40, unique=True)


@settings(max_examples=60, deadline=None)
@given(coords, st.floats(0.01, 1.0), st.integers(0, 10))
def test_net_invariants_and_determinism(xs, sep, seed):
    c = build_point_cloud(xs, None, 1.0)
    a = greedy_maximal_net(c, sep, order_seed=seed)
    b = greedy_maximal_net(c, sep, order_seed=seed)
    assert a.member_indices.tolist() == b.member_indices.tolist()
    assert check_net(c, a) == (True, True)
    order = np.random.default_rng(seed).permutation(len(xs))
    assert a.member_indices.tolist() == _oracle_greedy(c.points, sep, order)


@settings(max_examples=60, deadline=None)
@given(coords, st.data())
def test_set_distance_symmetric(xs, data):
    c = build_point_cloud(xs, None, 1.0)
    n = len(xs)
    E = data.draw(st.lists(st.integers(0, n - 1), min_size=1))
    F = data.draw(st.lists(st.integers(0, n - 1), min_size=1))
    B = Ball(data.draw(st.integers(0, n - 1)), data.draw(st.floats(0.05, 3.0)))
    try:
        d1 = set_distance_normalized(E, F, B, c)
    except UndefinedDistanceError:
        with pytest.raises(UndefinedDistanceError):
            set_distance_normalized(F, E, B, c)
        return
    assert d1 == set_distance_normalized(F, E, B, c)
    assert set_distance_normalized(E, E, B, c) == 0.0


def test_greedy_witness_can_grow_under_deletion():
    # the greedy count is not monotone: the middle point blocks both ends
    full = build_point_cloud([0.5, 0.0, 1.0], None, 1.0)
    cut = full.subcloud([1, 2])
    assert estimate_doubling_constant(full, [1.0]) == 1
    assert estimate_doubling_constant(cut, [1.0]) == 2


@settings(max_examples=40, deadline=None)
@given(coords, st.floats(0.05, 1.0))
def test_doubling_witness_bounded_by_packing(xs, r):
    # any r-separated subset of B(x, r) on the line has at most 3 points
    c = build_point_cloud(xs, None, 1.0)
    assert 1 <= estimate_doubling_constant(c, [r]) <= 3

import csv
import io
import math

import numpy as np
import pytest

from gmtk.cubes import Cube, CubeTree, build_family_cubes, thin_nets
from gmtk.errors import HypothesisError, ValidationError
from gmtk.fractals import interval_grid, parallel_segments
from gmtk.martingale import (
    alpha_of,
    build_stop_forest,
    build_weight_sequence,
    check_qbinc,
    maximal_cubes,
    packing_bound_via_weights,
    packing_over_families,
    select_high_content_cubes,
    series_constant,
)
from gmtk.metric import build_net_hierarchy, build_point_cloud

H_SEP, EPS, RHO = 2.0**-8, 0.5, 2.0**-4


def _chain(weights, diams, groups):
    """Hand-built nested cubes: cube t holds the points of groups t, t+1, ..."""
    n = sum(len(g) for g in groups)
    cloud = build_point_cloud(np.linspace(0, 1, n), weights, 1.0)
    cubes = []
    for t, d in enumerate(diams):
        mem = np.array(sorted(i for g in groups[t:] for i in g))
        cubes.append(Cube(t, t, int(mem[0]), d, d, mem, d))
    for t in range(len(cubes) - 1):
        cubes[t].children = [t + 1]
        cubes[t + 1].parent = t
    return cloud, CubeTree("schul", {"M": 16}, cubes, cloud)


@pytest.fixture(scope="module")
def segments():
    p = parallel_segments(H_SEP, 10)
    H = build_net_hierarchy(p, 0)
    fam = thin_nets(p, H, 1.0, EPS, RHO)
    return p, fam


# ---------------------------------------------------------------- constants

def test_alpha():
    assert alpha_of(0.4) == pytest.approx(1.1)
    a = alpha_of(0.4)
    assert series_constant(a) == pytest.approx(sum(a**-k for k in range(2000)))
    assert series_constant(a) > 0 > 1 / (1 - a)


# ---------------------------------------------------------------- selection

def test_interval_family_empty():
    g = interval_grid(257)
    fam = thin_nets(g, build_net_hierarchy(g, 0), 1.0, EPS, RHO)
    for i, j in fam.families()[:12]:
        assert len(select_high_content_cubes(build_family_cubes(g, fam, i, j), g, 1.0, EPS, RHO)) == 0


def test_selection_rejects_mismatched_J(segments):
    p, fam = segments
    tree = build_family_cubes(p, fam, 0, 0)
    with pytest.raises(ValidationError):
        select_high_content_cubes(tree, p, 1.0, 0.9, 0.5)
    with pytest.raises(ValidationError):
        select_high_content_cubes(tree, p, 1.0, 1.5, RHO)


def test_segments_selection_and_qbinc(segments):
    p, fam = segments
    found, rows_seen = 0, 0
    for i, j in fam.families():
        tree = build_family_cubes(p, fam, i, j)
        sel = select_high_content_cubes(tree, p, 1.0, EPS, RHO)
        found += len(sel)
        by_id = {q.id: q for q in tree.cubes}
        for q in sel.ids:
            assert sel.lower[q] > alpha_of(EPS) * by_id[q].diam
        for n, x, cid, ball_low, cube_low, ok in check_qbinc(p, tree, fam, i, j, sel, 1.0, 1.0, EPS, RHO):
            rows_seen += 1
            r, dq = 2.0 ** -(n * fam.J + j), by_id[cid].diam
            # both caps on the same side of the gap: the inclusion must hold
            if p.content_constant(RHO * dq) == p.content_constant(RHO * r):
                assert ok, (i, j, n, x)
    assert found > 0 and rows_seen > 0


# ---------------------------------------------------------------- forests

def test_forest_singleton():
    cloud, tree = _chain([1, 1, 1], [1.0, 0.5, 0.2], [[0], [1], [2]])
    f = build_stop_forest(0, {0}, tree)
    assert f.stop1[0] == [] and f.residues[0].tolist() == [0, 1, 2] and f.depth == 1


def test_forest_two_chain():
    cloud, tree = _chain([1, 1, 1], [1.0, 0.5, 0.2], [[0], [1], [2]])
    f = build_stop_forest(0, {0, 1}, tree)
    assert f.stop1[0] == [1] and f.layers == [[0], [1]]
    assert f.residues[0].tolist() == [0]


def test_forest_three_chain():
    cloud, tree = _chain([1, 1, 1], [1.0, 0.5, 0.2], [[0], [1], [2]])
    f = build_stop_forest(0, {0, 1, 2}, tree)
    assert f.stop1[0] == [1] and f.stop1[1] == [2]
    assert f.layers == [[0], [1], [2]]


def test_forest_rejects_root_outside():
    cloud, tree = _chain([1, 1, 1], [1.0, 0.5, 0.2], [[0], [1], [2]])
    with pytest.raises(ValidationError):
        build_stop_forest(0, {1, 2}, tree)


# ---------------------------------------------------------------- weights

def test_weights_stage0_fixpoint():
    cloud, tree = _chain([0.5, 0.25, 0.25], [0.3], [[0, 1, 2]])
    seq = build_weight_sequence(build_stop_forest(0, {0}, tree), cloud, 1.0, EPS, check_hypothesis=False)
    assert all(np.array_equal(st, seq.stages[0]) for st in seq.stages)
    assert np.allclose(seq.limit, 0.3 / 1.0)
    assert seq.integral(0, cloud.weights) == pytest.approx(0.3, rel=1e-15)


def test_weights_one_child_hand_example():
    # mu(R_Q) = 0.5, diam(R)^s = 0.3, diam(Q)^s = 1
    cloud, tree = _chain([0.5, 0.25, 0.25], [1.0, 0.3], [[0], [1, 2]])
    f = build_stop_forest(0, {0, 1}, tree)
    seq = build_weight_sequence(f, cloud, 1.0, EPS, check_hypothesis=False)
    assert seq.m[0] == pytest.approx(0.8)
    w1 = seq.stages[1]
    assert w1[0] * 0.5 == pytest.approx(0.625)
    assert w1[1] * 0.25 + w1[2] * 0.25 == pytest.approx(0.375)
    assert seq.integral(1, cloud.weights) == pytest.approx(1.0)
    with pytest.raises(HypothesisError):
        build_weight_sequence(f, cloud, 1.0, EPS)


def test_weights_three_chain_pointwise():
    eps = 0.4
    a = alpha_of(eps)
    # residue masses chosen so every m(T) >= alpha diam(T)
    cloud, tree = _chain([0.9, 0.3, 0.2], [1.0, 0.3, 0.1], [[0], [1], [2]])
    f = build_stop_forest(0, {0, 1, 2}, tree)
    seq = build_weight_sequence(f, cloud, 1.0, eps)
    m_Q, m_R = 0.9 + 0.3, 0.3 + 0.1
    oracle = (1.0 / m_Q) * (0.3 / m_R) * (0.1 / 0.2)
    assert seq.limit[2] == pytest.approx(oracle, rel=1e-12)
    assert seq.k_Q.tolist() == [0, 1, 2]
    assert seq.limit[2] < a**-2
    for k, stage in enumerate(seq.stages):
        assert seq.integral(k, cloud.weights) == pytest.approx(1.0, rel=1e-9)
        assert np.all(stage < a ** -np.minimum(k, seq.k_Q) * (1 + 1e-12))


def test_weights_csv():
    cloud, tree = _chain([0.9, 0.3, 0.2], [1.0, 0.3, 0.1], [[0], [1], [2]])
    seq = build_weight_sequence(build_stop_forest(0, {0, 1, 2}, tree), cloud, 1.0, 0.4)
    rows = list(csv.reader(io.StringIO(seq.to_csv())))
    assert rows[0] == ["cube_id", "stage", "cell_id", "cell_mass", "value"]
    for k in range(seq.k_max + 1):
        total = math.fsum(float(r[3]) * float(r[4]) for r in rows[1:] if int(r[1]) == k)
        assert total == pytest.approx(1.0, rel=1e-12)


# ---------------------------------------------------------------- packing

def test_packing_empty():
    cloud, tree = _chain([1, 1], [1.0], [[0, 1]])
    rep = packing_bound_via_weights(tree, set(), cloud, 1.0, EPS)
    assert rep.lhs == 0 and rep.bound == 0 and rep.ok


def test_packing_single_cube_on_segments(segments):
    p, fam = segments
    for i, j in fam.families():
        tree = build_family_cubes(p, fam, i, j)
        sel = select_high_content_cubes(tree, p, 1.0, EPS, RHO)
        if len(sel):
            q = min(sel.ids)
            rep = packing_bound_via_weights(tree, {q}, p, 1.0, EPS)
            by_id = {c.id: c for c in tree.cubes}
            assert rep.lhs == pytest.approx(by_id[q].diam)
            assert rep.lhs <= series_constant(alpha_of(EPS)) * p.mass(by_id[q].members)
            return
    pytest.fail("no selected cube on the segment instance")


def test_packing_over_segment_families(segments):
    p, fam = segments
    res = packing_over_families(p, fam, 1.0, EPS, RHO)
    assert res.ok
    K = series_constant(alpha_of(EPS))
    nonempty = 0
    for (i, j), rep in res.reports.items():
        assert rep.lhs <= rep.bound * (1 + 1e-9)
        assert rep.ratio <= K * (1 + 1e-9)
        assert rep.weight_integral == pytest.approx(rep.lhs, rel=1e-9, abs=1e-15)
        tops = rep.maximal
        assert math.fsum(p.mass(m) for m in [_members(p, fam, i, j, t) for t in tops]) <= p.total_mass * (1 + 1e-12)
        for k, heavy, bound in rep.uplim:
            assert heavy <= bound * (1 + 1e-12)
        nonempty += rep.n_selected > 0
    assert nonempty > 0
    assert res.total <= res.N * res.J * K * p.total_mass


def _members(p, fam, i, j, t):
    tree = build_family_cubes(p, fam, i, j)
    return tree.cubes[t].members


def test_maximal_cubes_disjoint():
    cloud, tree = _chain([1, 1, 1], [1.0, 0.5, 0.2], [[0], [1], [2]])
    assert maximal_cubes({1, 2}, tree) == [1]

import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from treeberg import (
    BranchingError,
    BranchingSpec,
    TreeSizeError,
    build_measure,
    build_tree,
    nu,
    sector_measure,
    sector_measures,
)

from conftest import q_levels
from oracles import explicit_tree, sector_set

specs = st.one_of(
    st.integers(2, 4).map(BranchingSpec.constant),
    st.tuples(st.integers(2, 3), st.integers(0, 1)).map(lambda ab: BranchingSpec.affine(*ab, cap=4)),
    st.lists(st.integers(2, 4), min_size=1, max_size=3).map(BranchingSpec.table),
)
trees = st.tuples(specs, st.integers(1, 4)).map(lambda sd: build_tree(*sd))
alphas = st.floats(1.05, 4.0)


# construction ----------------------------------------------------------------


def test_constant2_depth3_has_15_vertices():
    t = build_tree(BranchingSpec.constant(2), 3)
    assert t.n == 15
    assert list(t.level_sizes) == [1, 2, 4, 8]


def test_constant3_depth1():
    t = build_tree(BranchingSpec.constant(3), 1)
    assert t.n == 4
    assert list(t.children(0)) == [1, 2, 3]


def test_affine_level_sizes():
    t = build_tree(BranchingSpec.affine(2, 1), 3)
    assert list(t.level_sizes) == [1, 2, 6, 24]
    assert t.n == 33


def test_table_tails():
    assert [BranchingSpec.table([2, 3], "repeat_last")(l) for l in range(4)] == [2, 3, 3, 3]
    assert [BranchingSpec.table([2, 3], "cycle")(l) for l in range(4)] == [2, 3, 2, 3]


def test_affine_cap():
    s = BranchingSpec.affine(2, 1, cap=4)
    assert [s(l) for l in range(5)] == [2, 3, 4, 4, 4]


@pytest.mark.parametrize(
    "cfg",
    [{"kind": "constant", "q": 2}, {"kind": "affine", "a": 2, "b": 1, "cap": 8}, {"kind": "table", "values": [2, 3, 2], "tail": "repeat_last"}],
)
def test_config_round_trip(cfg):
    assert BranchingSpec.from_config(cfg).to_config() == cfg


@pytest.mark.parametrize(
    "make",
    [
        lambda: BranchingSpec.constant(1),
        lambda: BranchingSpec.table([2, 1]),
        lambda: BranchingSpec.affine(1, 1),
        lambda: BranchingSpec.from_config({"kind": "constant", "q": 2, "extra": 1}),
        lambda: BranchingSpec.from_config({"kind": "spiral"}),
        lambda: build_tree(BranchingSpec.constant(2), 0),
    ],
)
def test_branching_violations(make):
    with pytest.raises(BranchingError):
        make()


def test_size_cap():
    with pytest.raises(TreeSizeError):
        build_tree(BranchingSpec.constant(5), 9)
    with pytest.raises(TreeSizeError):
        build_tree(BranchingSpec.constant(2), 5, max_vertices=62)
    assert build_tree(BranchingSpec.constant(2), 5, max_vertices=63).n == 63


def test_alpha_must_exceed_one():
    t = build_tree(BranchingSpec.constant(2), 2)
    for a in (1.0, 0.5, float("nan")):
        with pytest.raises(ValueError):
            build_measure(t, a)


@given(trees)
def test_layout_matches_explicit_bfs(t):
    parent, level = explicit_tree(q_levels(t))
    assert np.array_equal(t.parent, parent)
    assert np.array_equal(t.level, level)


@given(trees)
def test_navigation_round_trips(t):
    for x in range(1, t.n):
        assert x in t.children(t.ancestor(x, 1))
        assert t.level[t.parent[x]] == t.level[x] - 1
        assert t.ancestor(x, int(t.level[x])) == 0
    for x in range(t.n):
        kids = t.children(x)
        if len(kids):
            union = {x}.union(*(set(t.sector(int(c))) for c in kids))
            assert set(t.sector(x)) == union
        assert frozenset(t.sector(x)) == sector_set(t.parent, x)


def test_ancestor_out_of_range():
    t = build_tree(BranchingSpec.constant(2), 3)
    with pytest.raises((IndexError, ValueError)):
        t.ancestor(3, 3)


def test_confluent_and_root_sector():
    t = build_tree(BranchingSpec.constant(2), 3)
    assert t.confluent(3, 4) == 1
    assert t.confluent(3, 5) == 0
    assert t.confluent(7, 8) == 3
    assert sorted(t.sector(0)) == list(range(15))


@given(trees)
def test_confluent_is_deepest_common_ancestor(t):
    for x in range(0, t.n, max(1, t.n // 7)):
        for y in range(0, t.n, max(1, t.n // 5)):
            c = t.confluent(x, y)
            ax = {t.ancestor(x, k) for k in range(int(t.level[x]) + 1)}
            ay = {t.ancestor(y, k) for k in range(int(t.level[y]) + 1)}
            common = ax & ay
            assert c in common and t.level[c] == max(t.level[z] for z in common)


# measure ------------------------------------------------------------------------


def test_raw_measure_constant2():
    t = build_tree(BranchingSpec.constant(2), 3)
    mu = build_measure(t, 2.0)
    assert np.array_equal(mu.values, 4.0 ** -t.level.astype(float))
    assert mu.total_mass == 1.875
    assert mu.values[0] == 1.0


def test_affine_level2_measure():
    t = build_tree(BranchingSpec.affine(2, 1), 3)
    mu = build_measure(t, 1.5)
    assert mu.values[t.level_offsets[2]] == pytest.approx(6 ** -1.5, rel=1e-15)
    assert mu.values[t.level_offsets[2]] == pytest.approx(0.0680414, abs=1e-7)


def test_sector_measure_examples():
    t = build_tree(BranchingSpec.constant(2), 3)
    mu = build_measure(t, 2.0)
    assert sector_measure(t, mu, 1) == 7 / 16
    assert sector_measure(t, mu, 14) == mu.values[14]
    assert np.all(sector_measures(t, mu) / mu.values <= 2.0)


@given(trees, alphas)
def test_measure_invariants(t, a):
    raw = build_measure(t, a)
    norm = build_measure(t, a, normalize=True)
    assert raw.values[0] == 1.0
    for x in range(1, t.n):
        assert raw.values[x] == pytest.approx(raw.values[t.parent[x]] / t.q[t.level[x] - 1] ** a, rel=1e-14)
    assert float(np.dot(t.level_sizes, raw.level_values)) == pytest.approx(raw.total_mass, rel=1e-14)
    assert abs(norm.values.sum() - 1.0) <= 1e-12
    assert np.all(norm.values > 0)
    # radial
    for l in range(t.depth + 1):
        assert np.ptp(raw.values[t.level_slice(l)]) == 0


@given(trees, alphas)
def test_sector_to_point_ratio(t, a):
    mu = build_measure(t, a)
    r = sector_measures(t, mu) / mu.values
    assert np.all(r >= 1 - 1e-15)
    assert np.all(r <= 1.0 / (1.0 - 2.0 ** (1.0 - a)) * (1 + 1e-12))
    for x in range(t.n):
        assert sector_measure(t, mu, x) == pytest.approx(mu.values[list(t.sector(x))].sum(), rel=1e-12)


# nu ------------------------------------------------------------------------------


def test_nu_examples():
    t = build_tree(BranchingSpec.constant(2), 6)
    assert nu(t, 5, 3) == 1.0
    assert nu(t, 0, 2) == 1 / 8


@given(trees)
def test_nu_multiplicative_and_bounded(t):
    L = t.depth
    for j in range(L):
        for k in range(j, L):
            assert nu(t, j, k) <= 2.0 ** -(k - j + 1)
            for m in range(j, k):
                assert nu(t, j, k) == pytest.approx(nu(t, j, m) * nu(t, m + 1, k), rel=1e-15)
    assert math.isclose(nu(t, 0, L - 1), 1.0 / np.prod(t.q), rel_tol=1e-15)

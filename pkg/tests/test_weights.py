import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from treeberg import BranchingSpec, build_measure, build_tree
from treeberg.bergman import BergmanProjector
from treeberg.cz import sparse_family
from treeberg.filtration import DyadicSystem
from treeberg.weights import (
    Weight,
    bp_characteristic,
    bp_characteristic_nonroot,
    dense_weighted_norm,
    power_iteration,
    radial_geometric,
    random_search,
    random_weight,
    sector_bump,
    sparse_weight_constant,
    tilde_bp_characteristic,
    weight_from_config,
    weighted_bound,
    weighted_bound_check,
    weighted_opnorm_lowerbound,
)

from conftest import make, q_levels
from oracles import bp_bruteforce, cached_cubes, tilde_bp_bruteforce

specs = st.one_of(
    st.integers(2, 3).map(BranchingSpec.constant),
    st.just(BranchingSpec.affine(2, 1, cap=4)),
    st.lists(st.integers(2, 3), min_size=1, max_size=3).map(BranchingSpec.table),
)
exponents = st.floats(1.2, 5.0)


@st.composite
def weighted(draw, max_depth=3):
    t = build_tree(draw(specs), draw(st.integers(1, max_depth)))
    mu = build_measure(t, draw(st.floats(1.1, 3.5)), True)
    logs = draw(st.lists(st.floats(-2, 2), min_size=t.n, max_size=t.n))
    return DyadicSystem(t, mu), Weight(10.0 ** np.array(logs))


def test_weight_validation():
    with pytest.raises(ValueError):
        Weight(np.array([1.0, 0.0]))
    with pytest.raises(ValueError):
        Weight(np.array([1.0, np.inf]))
    t, _ = make(2, 2)
    with pytest.raises(ValueError):
        weight_from_config(t, {"kind": "wild"})
    with pytest.raises(ValueError):
        sector_bump(t, 3, 0, 2.0)


def test_weight_configs():
    t, _ = make(2, 3)
    assert np.array_equal(weight_from_config(t, {"kind": "radial_geometric", "beta": 2.0}).values, 2.0 ** t.level)
    b = weight_from_config(t, {"kind": "sector_bump", "level": 1, "child": 1, "factor": 5.0}).values
    assert set(np.flatnonzero(b == 5.0)) == {2, 5, 6, 11, 12, 13, 14}
    r1 = weight_from_config(t, {"kind": "random", "seed": 3, "log_range": 1.0}).values
    assert np.array_equal(r1, random_weight(t, 3, 1.0).values)
    assert np.all((r1 >= 0.1) & (r1 <= 10))
    assert np.all(weight_from_config(t, {"kind": "constant"}).values == 1.0)


@given(weighted(), exponents)
def test_bp_matches_bruteforce(sw, p):
    S, w = sw
    cl = cached_cubes(q_levels(S.tree))
    mu = S.mu.values
    assert bp_characteristic(S, w, p) == pytest.approx(bp_bruteforce(cl, w.values, mu, p), rel=1e-12)
    assert tilde_bp_characteristic(S, w, p) == pytest.approx(tilde_bp_bruteforce(cl, w.values, mu, p), rel=1e-12)
    assert bp_characteristic_nonroot(S, w, p) <= bp_characteristic(S, w, p)


@given(weighted(), exponents)
def test_bp_duality_and_lower_bounds(sw, p):
    S, w = sw
    pp = p / (p - 1)
    bp = bp_characteristic(S, w, p)
    dual = bp_characteristic(S, w.dual(p), pp)
    assert dual == pytest.approx(bp ** (pp / p), rel=1e-10)
    # Jensen: every average product is at least 1
    assert bp >= 1 - 1e-12
    # singleton pairs make the tilde class at least as large on every non-root cube
    assert tilde_bp_characteristic(S, w, p) >= bp_characteristic_nonroot(S, w, p) * (1 - 1e-12)


@given(weighted(), exponents, st.floats(0.01, 100))
def test_bp_scale_invariant(sw, p, c):
    S, w = sw
    assert bp_characteristic(S, w.scaled(c), p) == pytest.approx(bp_characteristic(S, w, p), rel=1e-10)
    assert tilde_bp_characteristic(S, w.scaled(c), p) == pytest.approx(tilde_bp_characteristic(S, w, p), rel=1e-10)


def test_constant_weight_characteristics(small):
    t, _, S, P = small
    w = Weight(np.ones(t.n))
    for p in (1.5, 2.0, 4.0):
        assert bp_characteristic(S, w, p) == pytest.approx(1.0, rel=1e-14)
        assert tilde_bp_characteristic(S, w, p) == pytest.approx(1.0, rel=1e-14)
    est = power_iteration(P, w)
    assert est.converged
    assert est.value == pytest.approx(1.0, abs=1e-8)


@pytest.mark.parametrize("make_w", [
    lambda t: radial_geometric(t, 2.0),
    lambda t: radial_geometric(t, 0.5),
    lambda t: sector_bump(t, 1, 0, 20.0),
    lambda t: random_weight(t, 4, 1.0),
])
@pytest.mark.parametrize("q,depth", [(2, 4), (3, 3)])
def test_power_iteration_matches_dense_norm(make_w, q, depth):
    t, mu = make(q, depth)
    P = BergmanProjector(t, mu)
    w = make_w(t)
    est = power_iteration(P, w, tol=1e-10, max_iter=20000)
    exact = dense_weighted_norm(P, w)
    assert est.value <= exact * (1 + 1e-10)
    assert est.value == pytest.approx(exact, rel=1e-6)
    chk = weighted_bound_check(P, w, 2.0, tol=1e-10)
    assert chk.ratio == pytest.approx(est.value / chk.bound, rel=1e-6)


def test_random_search_is_a_lower_bound():
    t, mu = make(2, 4)
    P = BergmanProjector(t, mu)
    w = sector_bump(t, 2, 1, 10.0)
    exact = dense_weighted_norm(P, w)
    est = random_search(P, w, 2.0, count=32, seed=1)
    assert 1.0 - 1e-12 <= est.value <= exact * (1 + 1e-10)
    assert weighted_opnorm_lowerbound(P, w, 3.0).strategy == "random_search"
    with pytest.raises(ValueError):
        weighted_opnorm_lowerbound(P, w, 3.0, strategy="power_iteration")
    with pytest.raises(ValueError):
        bp_characteristic(P.system, w, 1.0)


def test_weighted_bound_shape():
    assert weighted_bound(1.0, 1.0, 2.0) == 1.0
    # p = 2: tilde^(1/2) * B^(1/2 + 1/2)
    assert weighted_bound(4.0, 9.0, 2.0) == pytest.approx(3.0 * 4.0, rel=1e-14)
    assert weighted_bound(2.0, 1.0, 3.0) == pytest.approx(2.0 ** (1.5 / 9 + 2 / 3), rel=1e-14)


@pytest.mark.parametrize("p", [1.5, 2.0, 3.0])
def test_sparse_weight_constant_bounded(p):
    t, mu = make(2, 5, 1.5)
    S = DyadicSystem(t, mu)
    rng = np.random.default_rng(11)
    for seed in range(5):
        w = random_weight(t, seed, 1.0)
        f1 = rng.pareto(1.0, t.n) + 1e-3
        f2 = rng.pareto(1.0, t.n) + 1e-3
        fam = sparse_family(S, f1, f2)
        c = sparse_weight_constant(fam, w, p)
        assert 0 < c <= 2.0**p * (1 + 1e-12)

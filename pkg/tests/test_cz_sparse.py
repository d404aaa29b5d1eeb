import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from treeberg import BranchingSpec, build_measure, build_tree
from treeberg.bergman import BergmanProjector
from treeberg.cz import cz_decompose, domination_report, sparse_family, sparse_forms
from treeberg.filtration import DyadicSystem
from treeberg.samplers import cz_case

from conftest import make, q_levels
from oracles import cached_cubes, cz_cubes, sparse_recursion

specs = st.one_of(
    st.integers(2, 3).map(BranchingSpec.constant),
    st.just(BranchingSpec.affine(2, 1, cap=4)),
    st.lists(st.integers(2, 3), min_size=1, max_size=3).map(BranchingSpec.table),
)


@st.composite
def systems(draw, max_depth=3):
    t = build_tree(draw(specs), draw(st.integers(1, max_depth)))
    return DyadicSystem(t, build_measure(t, draw(st.floats(1.1, 3.5)), draw(st.booleans())))


def nonneg(draw, n, sparse=True):
    vals = draw(st.lists(st.one_of(st.just(0.0), st.floats(1e-3, 10)), min_size=n, max_size=n))
    f = np.array(vals)
    if sparse:
        keep = np.array(draw(st.lists(st.booleans(), min_size=n, max_size=n)))
        f = np.where(keep, f, 0.0)
    if not f.any():
        f[-1] = 1.0
    return f


def as_sets(S, ids):
    return sorted(frozenset(S.members(int(c)).tolist()) for c in ids)


# Calderon-Zygmund -------------------------------------------------------------------


@given(st.data())
def test_cz_cubes_match_bruteforce(data):
    S = data.draw(systems())
    f = nonneg(data.draw, S.tree.n)
    regions = [c for c in S.all_cubes() if not S.is_point(c) and f[S.mask(c)].any()]
    region = data.draw(st.sampled_from(regions)) if regions else 0
    f = np.where(S.mask(region), f, 0.0)
    if not f.any():
        f[S.members(region)[-1]] = 1.0
    avg = S.average(region, f)
    height = avg * data.draw(st.floats(1.01, 30))
    cz = cz_decompose(S, f, height, region)
    cl = cached_cubes(q_levels(S.tree))
    want = cz_cubes(cl, f, S.mu.values, height, frozenset(S.members(region).tolist()))
    assert as_sets(S, cz.cubes) == want
    chk = cz.check()
    scale = max(1.0, np.abs(f).max())
    assert chk["mean_defect"] <= 1e-12 * scale
    assert chk["reconstruction"] <= 1e-12 * scale
    assert chk["localization"] <= 1e-12 * scale
    assert chk["overlap"] == 0
    assert chk["uncovered"] == 0 or region != 0
    const = cz.constants()
    assert const["good_l1"] <= 1 + 1e-12
    assert const["bad_l1"] <= 2 + 1e-12
    # bad pieces have mean zero and live in the parent cube
    mu = S.mu.values
    for j in range(len(cz.cubes)):
        b = cz.bad(j)
        assert abs(np.dot(b, mu)) <= 1e-12 * scale * S.mu.mass
        assert not np.any(b[~S.mask(int(cz.parents[j]))])
    assert np.abs(cz.bad_sum() - sum((cz.bad(j) for j in range(len(cz.cubes))), np.zeros(S.tree.n))).max() <= 1e-11 * scale


def test_cz_good_part_bounded_by_height_times_constant():
    t, mu = make(2, 5)
    S = DyadicSystem(t, mu)
    rng = np.random.default_rng(2)
    for _ in range(30):
        f, height, region = cz_case(S, rng)
        cz = cz_decompose(S, f, height, region)
        # off the parents the good part is f itself, which is at most the height
        assert np.all(cz.good[~S.mask(region)] == 0)
        c = cz.constants()
        assert c["good_l2"] <= 2 * cz.system.tree.q[0] + 1
        assert np.isfinite(c["good_bmo"])


def test_cz_rejects_bad_input(small):
    t, mu, S, _ = small
    f = np.ones(t.n)
    with pytest.raises(ValueError):
        cz_decompose(S, -f, 2.0)
    with pytest.raises(ValueError):
        cz_decompose(S, f, 0.5)
    with pytest.raises(ValueError):
        cz_decompose(S, f, 2.0, region=1)


def test_cz_no_cube_when_flat(small):
    t, _, S, _ = small
    cz = cz_decompose(S, np.ones(t.n), 1.5)
    assert len(cz.cubes) == 0
    assert np.array_equal(cz.good, np.ones(t.n))


# sparse families ---------------------------------------------------------------------


def oracle_E(S, family_sets, f1, f2):
    """Sibling form from explicit sets: sector members only, siblings averaged over q."""
    t, mu = S.tree, S.mu.values
    out = 0.0
    sectors = {}
    for c in range(1, t.n):
        sectors[frozenset(S.members(c).tolist())] = c
    members = [sectors[s] for s in family_sets if s in sectors]
    for c in members:
        p = int(t.parent[c])
        sib = sum(np.dot(f2[S.mask(d)], mu[S.mask(d)]) / S.measure(d) for d in members if t.parent[d] == p)
        out += np.dot(f1[S.mask(c)], mu[S.mask(c)]) / S.measure(c) * sib / t.q[int(t.level[p])] * S.measure(c)
    return out


@given(st.data())
def test_sparse_family_matches_recursion(data):
    S = data.draw(systems())
    n = S.tree.n
    f1, f2 = nonneg(data.draw, n), nonneg(data.draw, n)
    fam = sparse_family(S, f1, f2)
    cl = cached_cubes(q_levels(S.tree))
    want = sparse_recursion(cl, f1, f2, S.mu.values)
    got = {frozenset(S.members(int(c)).tolist()): frozenset(fam.exceptional_set(int(c)).tolist()) for c in fam.cubes}
    assert got == want
    cert = fam.certify()
    assert cert["contained"] and cert["labelled"] and cert["half_density"]
    assert cert["disjoint_defect"] <= 1e-12 * S.mu.mass
    assert cert["partition_defect"] <= 1e-12 * S.mu.mass
    assert cert["min_density"] >= 0.5
    A, E = sparse_forms(fam, f1, f2)
    mu = S.mu.values
    A_ref = sum(np.dot(f1[cl.mask(cl.index[s], n)], mu[cl.mask(cl.index[s], n)]) * np.dot(f2[cl.mask(cl.index[s], n)], mu[cl.mask(cl.index[s], n)]) / mu[list(s)].sum() for s in want)
    assert A == pytest.approx(A_ref, rel=1e-12)
    assert E == pytest.approx(oracle_E(S, list(want), f1, f2), rel=1e-12, abs=1e-300)


def test_constant_pair_gives_total_mass():
    for normalize in (False, True):
        t, mu = make(3, 3, 1.5, normalize)
        S = DyadicSystem(t, mu)
        fam = sparse_family(S, np.ones(t.n), np.ones(t.n))
        assert list(fam.cubes) == [0]
        A, E = sparse_forms(fam, np.ones(t.n), np.ones(t.n))
        assert A == pytest.approx(mu.mass, rel=1e-14)
        assert E == 0.0


def test_leaf_point_mass_builds_a_chain(small):
    t, mu, S, _ = small
    leaf = t.n - 1
    f1 = np.zeros(t.n)
    f1[leaf] = 1.0
    fam = sparse_family(S, f1, np.ones(t.n))
    members = [int(c) for c in fam.cubes]
    # members are nested and all contain the leaf
    assert all(S.contains(c, leaf) for c in members)
    for a, b in zip(members, members[1:]):
        assert S.contains(a, b) or S.contains(b, a)
    cl = cached_cubes(q_levels(t))
    assert set(as_sets(S, members)) == set(sparse_recursion(cl, f1, np.ones(t.n), mu.values))
    assert fam.certify()["half_density"]


def test_sparse_rejects_invalid():
    t, mu = make(2, 2)
    S = DyadicSystem(t, mu)
    with pytest.raises(ValueError):
        sparse_family(S, -np.ones(t.n), np.ones(t.n))
    with pytest.raises(ValueError):
        sparse_family(S, np.zeros(t.n), np.ones(t.n))


@pytest.mark.parametrize("q,depth,alpha", [(2, 4, 1.25), (3, 3, 2.0)])
def test_domination_report(q, depth, alpha):
    t, mu = make(q, depth, alpha)
    P = BergmanProjector(t, mu)
    rng = np.random.default_rng(9)
    F1 = rng.pareto(1.5, (t.n, 40)) * (rng.random((t.n, 40)) < 0.3)
    F2 = rng.pareto(1.5, (t.n, 40)) * (rng.random((t.n, 40)) < 0.3)
    F1[0] += 1e-3
    F2[0] += 1e-3
    rep = domination_report(P, F1, F2)
    assert rep.certified and rep.min_density >= 0.5
    lhs = np.abs(np.einsum("it,it,i->t", P.apply(F1), F2, mu.values))
    assert np.allclose(rep.lhs, lhs)
    assert np.all(np.isfinite(rep.ratios)) and rep.max_ratio <= 4.0

from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from treeberg import BranchingSpec, build_measure, build_tree, nu
from treeberg.bergman import (
    BergmanBasis,
    BergmanProjector,
    basis_size,
    dense_projector,
    laplacian,
    phi,
    phi_increment_constant,
    phi_table,
)
from treeberg.filtration import DyadicSystem

from conftest import make, q_levels
from oracles import explicit_tree, harmonic_projector, laplacian_matrix, phi_direct

specs = st.one_of(
    st.integers(2, 4).map(BranchingSpec.constant),
    st.just(BranchingSpec.affine(2, 1, cap=4)),
    st.lists(st.integers(2, 4), min_size=1, max_size=3).map(BranchingSpec.table),
)


@st.composite
def projectors(draw, max_depth=3):
    t = build_tree(draw(specs), draw(st.integers(1, max_depth)))
    mu = build_measure(t, draw(st.floats(1.1, 3.5)), draw(st.booleans()))
    return BergmanProjector(t, mu)


def oracle_projector(t, mu):
    parent, level = explicit_tree(q_levels(t))
    return harmonic_projector(parent, level, q_levels(t), mu.values)


# profiles -----------------------------------------------------------------------


def test_phi_constant2_closed_form():
    t = build_tree(BranchingSpec.constant(2), 8)
    for m in range(9):
        assert phi(t, 0, m) == 2.0 - 2.0 ** -m
    assert phi(t, 0, 3) == 15 / 8


def test_phi_constant3():
    t = build_tree(BranchingSpec.constant(3), 3)
    assert phi(t, 0, 2) == pytest.approx(float(Fraction(13, 9)), rel=1e-15)
    assert phi(t, 0, 3) == pytest.approx(float(Fraction(40, 27)), rel=1e-15)


@given(specs, st.integers(1, 6))
def test_phi_matches_direct_sum(spec, depth):
    t = build_tree(spec, depth)
    tab = phi_table(t)
    for k in range(depth + 1):
        assert tab[k, k] == 1.0
        for m in range(k, depth + 1):
            assert tab[k, m] == pytest.approx(phi_direct(q_levels(t), k, m), rel=1e-14)
            assert 1.0 <= tab[k, m] < 2.0
        for m in range(k, depth):
            assert tab[k, m + 1] - tab[k, m] == pytest.approx(nu(t, k, m), rel=1e-14)
    assert phi_increment_constant(t) == pytest.approx(1.0, rel=1e-14)


# basis ----------------------------------------------------------------------------


@pytest.mark.parametrize("q,depth,size", [(2, 3, 8), (3, 1, 3), (2, 1, 2), (3, 2, 9)])
def test_basis_size_examples(q, depth, size):
    t, mu = make(q, depth)
    assert basis_size(t) == size
    assert BergmanBasis(t, mu).size == size
    assert size == t.level_sizes[-1]


@given(specs, st.integers(1, 4), st.floats(1.1, 3.5), st.booleans())
def test_basis_orthonormal(spec, depth, alpha, norm):
    t = build_tree(spec, depth)
    mu = build_measure(t, alpha, norm)
    B = BergmanBasis(t, mu)
    off, diag = B.gram_errors()
    assert off <= 1e-10 and diag <= 1e-10
    H = B.matrix().toarray()
    G = H.T @ (H * mu.values[:, None])
    assert np.allclose(G, np.eye(B.size), atol=1e-10)
    # every atom is harmonic
    assert np.abs(laplacian(t, H)).max() <= 1e-10 * np.abs(H).max()


@given(specs, st.integers(1, 3), st.floats(1.1, 3.5))
def test_basis_spans_harmonic_space(spec, depth, alpha):
    t = build_tree(spec, depth)
    mu = build_measure(t, alpha, True)
    parent, level = explicit_tree(q_levels(t))
    L = laplacian_matrix(parent, level, q_levels(t))
    assert np.allclose(laplacian(t, np.eye(t.n)), L, atol=1e-15)
    assert BergmanBasis(t, mu).size == t.n - np.linalg.matrix_rank(L)


# projector -----------------------------------------------------------------------


def test_laplacian_of_root_delta(small):
    t, _, _, _ = small
    d = np.zeros(t.n)
    d[0] = 1.0
    lap = laplacian(t, d)
    assert lap[0] == 1.0
    assert lap[1] == pytest.approx(-1 / 3, rel=1e-15)
    assert lap[2] == pytest.approx(-1 / 3, rel=1e-15)
    assert np.all(lap[3:] == 0)


@given(projectors())
def test_projector_matches_oracle(P):
    t, mu = P.tree, P.mu
    Pd = oracle_projector(t, mu)
    assert np.allclose(P.apply(np.eye(t.n)), Pd, atol=1e-10)
    assert np.allclose(dense_projector(BergmanBasis(t, mu)), Pd, atol=1e-10)


@given(st.data())
def test_projector_identities(data):
    P = data.draw(projectors())
    t, mu = P.tree, P.mu.values
    rng = np.random.default_rng(data.draw(st.integers(0, 2**32 - 1)))
    f, g = rng.standard_normal((2, t.n))
    Pf = P.apply(f)
    assert np.allclose(P.apply(np.ones(t.n)), 1.0, atol=1e-12)
    assert np.abs(P.apply(Pf) - Pf).max() <= 1e-10 * max(1, np.abs(f).max())
    assert abs(np.dot(Pf, g * mu) - np.dot(f, P.apply(g) * mu)) <= 1e-10 * max(1, np.abs(f).max() * np.abs(g).max())
    assert np.abs(laplacian(t, Pf)).max() <= 1e-10 * np.abs(f).max()
    # batch axes
    F = np.stack([f, g], axis=1)
    assert np.allclose(P.apply(F), np.stack([Pf, P.apply(g)], axis=1), atol=1e-13)


@given(projectors())
def test_diff_pieces_sum_to_projector(P):
    t = P.tree
    S = DyadicSystem(t, P.mu)
    f = np.random.default_rng(3).standard_normal(t.n)
    total = np.full(t.n, np.dot(f, P.mu.values) / P.mu.mass)
    for v in range(t.interior_count):
        d = P.diff(v, f)
        assert not np.any(d[~S.mask(v)])
        total += d
    assert np.allclose(total, P.apply(f), atol=1e-11)
    # point cubes contribute nothing
    assert not np.any(P.diff(S.singleton(0), f))


def test_kernel_values_and_pieces(small):
    t, mu, S, P = small
    K = P.apply(np.eye(t.n)) / mu.values[None, :]
    for x in range(t.n):
        for y in range(t.n):
            assert P.kernel(x, y) == pytest.approx(K[x, y], abs=1e-11)
    assert np.allclose(P.kernel_matrix(), K, atol=1e-11)
    # symmetric kernel
    assert np.allclose(K, K.T, atol=1e-11)
    # k_Q: same child vs different children
    q = 2
    phi1 = phi_table(t)[1]
    N = P._norms[1]
    assert P.kernel(3, 4, scope="cube", cube=0) == pytest.approx(q * phi1[2] ** 2 / N * (1 - 1 / q), rel=1e-13)
    assert P.kernel(3, 5, scope="cube", cube=0) == pytest.approx(q * phi1[2] ** 2 / N * (-1 / q), rel=1e-13)
    assert P.kernel(3, 5, scope="cube", cube=1) == 0.0
    assert P.kernel(0, 5, scope="cube", cube=0) == 0.0


def test_localized_and_outside_split(small):
    t, mu, S, P = small
    f = np.random.default_rng(4).standard_normal(t.n)
    inside = P.localized(1, f)
    outside = P.outside([1], 0, f)
    full = P.apply(f)  # outside of X carries the constant piece
    assert np.allclose(inside + outside, full, atol=1e-12)
    for scope_y in range(t.n):
        col = P.kernel_column(scope_y, P.mask_outside([1], 0), constant=False)
        for x in (0, 3, 9):
            assert P.kernel(x, scope_y, scope="truncated", family=[1]) == pytest.approx(col[x], abs=1e-14)


def test_bad_scope_rejected(small):
    _, _, _, P = small
    with pytest.raises(ValueError):
        P.kernel(0, 0, scope="nope")

from __future__ import annotations

from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fockbench.fock import build_basis, generators, left_creation, right_creation, vacuum_projection
from fockbench.numkit import (
    INT_LIMIT,
    ExactOverflowError,
    LinOp,
    ScalarModeError,
    commutator,
    compress,
    exact_eq,
    kron,
    rank,
    rank_of_span,
    spectral_norm,
)


def small_int_matrix(max_dim=5, lo=-3, hi=3):
    return st.integers(1, max_dim).flatmap(
        lambda r: st.integers(1, max_dim).flatmap(
            lambda c: st.lists(st.integers(lo, hi), min_size=r * c, max_size=r * c).map(
                lambda xs: np.array(xs, dtype=np.int64).reshape(r, c)
            )
        )
    )


def square_pair(max_dim=5):
    return st.integers(1, max_dim).flatmap(
        lambda n: st.tuples(
            st.lists(st.integers(-3, 3), min_size=n * n, max_size=n * n),
            st.lists(st.integers(-3, 3), min_size=n * n, max_size=n * n),
        ).map(lambda ab: tuple(np.array(x, dtype=np.int64).reshape(n, n) for x in ab))
    )


def fraction_rank(rows):
    """Rank by Gaussian elimination over the rationals: an oracle independent of the Bareiss code."""
    m = [[Fraction(int(v)) for v in row] for row in rows]
    r = 0
    ncols = len(m[0]) if m else 0
    for c in range(ncols):
        piv = next((i for i in range(r, len(m)) if m[i][c] != 0), None)
        if piv is None:
            continue
        m[r], m[piv] = m[piv], m[r]
        for i in range(len(m)):
            if i != r and m[i][c] != 0:
                f = m[i][c] / m[r][c]
                m[i] = [a - f * b for a, b in zip(m[i], m[r])]
        r += 1
    return r


# construction and invariants ---------------------------------------------


def test_canonical_form_has_no_duplicates_or_zeros():
    a = LinOp.from_entries((2, 2), [0, 0, 1, 1], [0, 0, 1, 0], [2, 3, 0, 4])
    assert a.entries() == [(0, 0, 5), (1, 0, 4)]


def test_exact_mode_rejects_fractional_entries():
    with pytest.raises(ScalarModeError):
        LinOp(np.array([[0.5]]), exact=True)


@given(small_int_matrix())
def test_transpose_is_involutive(m):
    a = LinOp(m)
    assert exact_eq(a.T.T, a)


@given(square_pair())
def test_transpose_reverses_products(pair):
    a, b = (LinOp(m) for m in pair)
    assert exact_eq((a @ b).T, b.T @ a.T)


@given(square_pair(), square_pair())
@settings(max_examples=50)
def test_kron_mixed_product(p, q):
    a, c = (LinOp(m) for m in p)
    b, d = (LinOp(m) for m in q)
    assert exact_eq(kron(a, b) @ kron(c, d), kron(a @ c, b @ d))


@given(square_pair(4), small_int_matrix(3), st.integers(-3, 3))
@settings(max_examples=50)
def test_kron_bilinear(pair, m, s):
    a, a2 = (LinOp(x) for x in pair)
    b = LinOp(m)
    assert exact_eq(kron(a + a2, b), kron(a, b) + kron(a2, b))
    assert exact_eq(kron(a * s, b), kron(a, b * s))


@given(square_pair())
def test_commutator_antisymmetric(pair):
    a, b = (LinOp(m) for m in pair)
    assert exact_eq(commutator(a, b), -commutator(b, a))
    assert commutator(a, a).is_zero()


def test_kron_identities():
    assert exact_eq(kron(LinOp.identity(2), LinOp.identity(3)), LinOp.identity(6))


def test_kron_matches_brute_force_loop():
    b = build_basis(1, 2)
    r1t, l1 = right_creation(b, 1).T.toarray(), left_creation(b, 1).toarray()
    D = b.dim
    want = np.zeros((D * D, D * D), dtype=np.int64)
    for a in range(D):
        for bb in range(D):
            for c in range(D):
                for dd in range(D):
                    want[a * D + c, bb * D + dd] = r1t[a, bb] * l1[c, dd]
    got = kron(right_creation(b, 1).T, left_creation(b, 1))
    assert got.shape == (9, 9)
    assert np.array_equal(got.toarray(), want)


def test_kron_vacuum_projection_on_basis_vectors():
    b = build_basis(2, 2)
    op = kron(vacuum_projection(b), LinOp.identity(b.dim))
    for i, w1 in enumerate(b.words):
        for j, w2 in enumerate(b.words):
            e = np.zeros(b.dim * b.dim, dtype=np.int64)
            e[i * b.dim + j] = 1
            assert np.array_equal(op.apply(e), e if w1 == () else 0 * e)


def test_commutator_dimension_mismatch():
    with pytest.raises(ValueError):
        commutator(LinOp.identity(2), LinOp.identity(3))


# overflow -------------------------------------------------------------------


def test_product_overflow_is_an_error():
    big = LinOp.from_entries((2, 2), [0, 0, 1, 1], [0, 1, 0, 1], [2**31, 2**31, 2**31, 2**31])
    with pytest.raises(ExactOverflowError):
        big @ big


def test_addition_overflow_is_an_error():
    a = LinOp.from_entries((1, 1), [0], [0], [INT_LIMIT - 1])
    with pytest.raises(ExactOverflowError):
        a + a


def test_scaling_overflow_is_an_error():
    a = LinOp.from_entries((1, 1), [0], [0], [2**40])
    with pytest.raises(ExactOverflowError):
        a * 2**30


def test_float_mode_does_not_check_overflow():
    big = LinOp.from_entries((1, 1), [0], [0], [2**40]).to_float()
    assert (big @ big).max_abs() == float(2**80)


# compression ---------------------------------------------------------------


def test_compress_identity():
    b = build_basis(2, 3)
    for k in range(b.d + 1):
        assert exact_eq(b.compress(LinOp.identity(b.dim), k), LinOp.identity(b.level_dim(k)))


def test_compress_is_upper_left_block():
    b = build_basis(2, 3)
    ell = left_creation(b, 1)
    assert np.array_equal(b.compress(ell, 2).toarray(), ell.toarray()[:7, :7])


def test_compress_two_legs_keeps_prefix_on_each_leg():
    a = LinOp(np.arange(9, dtype=np.int64).reshape(3, 3))
    c = LinOp(np.arange(9, dtype=np.int64).reshape(3, 3) - 4)
    lhs = compress(kron(a, c), 2, 3, legs=2)
    rhs = kron(compress(a, 2), compress(c, 2))
    assert exact_eq(lhs, rhs)


def test_product_recomputed_at_larger_depth_agrees_after_compression():
    small, big = build_basis(2, 3), build_basis(2, 5)
    xs, xb = generators(small).x, generators(big).x
    lhs = small.compress(xs[0] @ xs[1], small.d - 1)
    rhs = big.compress(xb[0] @ xb[1], small.d - 1)
    assert exact_eq(lhs, rhs)


# equality and rank ---------------------------------------------------------


def test_exact_eq_basic():
    b = build_basis(2, 3)
    g = generators(b)
    assert exact_eq(g.ell[0], g.ell[0])
    assert not exact_eq(g.ell[0], g.ell[1])


def test_exact_eq_refuses_float_mode():
    a = LinOp.identity(2)
    with pytest.raises(ScalarModeError):
        exact_eq(a.to_float(), a)


def test_rank_of_span_trivial():
    a = LinOp(np.array([[1, 2], [3, 4]], dtype=np.int64))
    assert rank_of_span([LinOp.identity(3)]) == 1
    assert rank_of_span([a, a * 2]) == 1
    assert rank_of_span([a, a.T]) == 2
    assert rank_of_span([LinOp.zeros(3)]) == 0


two_by_three = st.lists(st.integers(-2, 2), min_size=6, max_size=6).map(
    lambda xs: np.array(xs, dtype=np.int64).reshape(2, 3)
)


@given(st.lists(two_by_three, min_size=1, max_size=7))
@settings(max_examples=60)
def test_rank_of_span_matches_rational_elimination(mats):
    ops = [LinOp(m) for m in mats]
    assert rank_of_span(ops) == fraction_rank([m.ravel() for m in mats])


@given(small_int_matrix(6, -4, 4))
@settings(max_examples=80)
def test_rank_matches_rational_elimination(m):
    assert rank(LinOp(m)) == fraction_rank(m)


def test_float_rank_uses_floating_path():
    m = np.array([[1.0, 2.0], [2.0, 4.0]])
    assert rank(LinOp(m, exact=False)) == 1


# spectral norm ---------------------------------------------------------------


def test_norm_of_zero():
    est = spectral_norm(LinOp.zeros(5).to_float())
    assert est.value == 0.0


def test_norm_of_path_graph_matches_cosine_formula():
    b = build_basis(1, 6)
    x1 = generators(b).x[0]
    oracle = np.linalg.eigvalsh(np.diag(np.ones(6), 1) + np.diag(np.ones(6), -1)).max()
    est = spectral_norm(x1.to_float())
    assert est.value == pytest.approx(2 * np.cos(np.pi / 8), abs=1e-12)
    assert est.value == pytest.approx(oracle, abs=1e-12)
    assert est.method == "dense-eigensolver"


def test_norm_of_sum_of_left_projections_is_one():
    b = build_basis(3, 4)
    g = generators(b)
    s = LinOp.zeros(b.dim)
    for ell in g.ell:
        s = s + ell @ ell.T
    assert spectral_norm(s.to_float()).value == pytest.approx(1.0, abs=1e-10)


@given(small_int_matrix(8, -5, 5))
@settings(max_examples=60)
def test_dense_path_agrees_with_numpy(m):
    want = np.linalg.norm(m.astype(float), 2)
    got = spectral_norm(LinOp(m).to_float()).value
    assert got == pytest.approx(want, rel=1e-8, abs=1e-12)


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_power_iteration_agrees_with_dense(seed):
    rng = np.random.default_rng(seed)
    m = rng.standard_normal((60, 60)) * (rng.random((60, 60)) < 0.2)
    want = np.linalg.norm(m, 2)
    est = spectral_norm(LinOp(m, exact=False), 1e-12, dense_max=10)
    assert est.method in ("power-iteration", "lanczos")
    assert est.converged
    assert est.value == pytest.approx(want, rel=1e-8)
    assert est.value <= want * (1 + 1e-12)


def test_power_iteration_is_deterministic():
    rng = np.random.default_rng(5)
    a = LinOp(rng.standard_normal((40, 40)), exact=False)
    e1 = spectral_norm(a, dense_max=10)
    e2 = spectral_norm(a, dense_max=10)
    assert e1 == e2


def test_clustered_spectrum_falls_back_to_lanczos():
    # two nearly equal top singular values stall plain power iteration
    diag = np.concatenate([[1.0, 1.0 - 1e-7], np.linspace(0, 0.5, 300)])
    est = spectral_norm(LinOp.diagonal(diag, exact=False), 1e-10, dense_max=10)
    assert est.converged
    assert est.value == pytest.approx(1.0, abs=1e-9)


def test_norm_monotone_under_compression():
    b = build_basis(2, 4)
    x = generators(b).x
    a = (x[0] @ x[1] + x[1]).to_float()
    full = spectral_norm(a).value
    for k in range(b.d + 1):
        assert spectral_norm(b.compress(a, k)).value <= full + 1e-10


def test_spectral_norm_needs_positive_tol():
    with pytest.raises(ValueError):
        spectral_norm(LinOp.identity(2).to_float(), 0)

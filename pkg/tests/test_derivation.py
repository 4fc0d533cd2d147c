from __future__ import annotations

import math
import random

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fockbench import derivation as dv
from fockbench.fock import (
    NcPoly,
    build_basis,
    eval_poly,
    eval_word,
    generators,
    level_projection,
    random_poly,
    vacuum_projection,
)
from fockbench.numkit import LinOp, commutator, exact_eq, spectral_norm


def dense_S(n, d):
    """S assembled with numpy from word maps, independent of the package builders."""
    words = [()]
    for k in range(1, d + 1):
        words += [w + (j,) for w in words if len(w) == k - 1 for j in range(1, n + 1)]
    idx = {w: i for i, w in enumerate(words)}
    D = len(words)
    S = np.zeros((D * D, D * D))
    for j in range(1, n + 1):
        ell, r = np.zeros((D, D)), np.zeros((D, D))
        for w in words:
            if len(w) < d:
                ell[idx[(j,) + w], idx[w]] = 1
                r[idx[w + (j,)], idx[w]] = 1
        S += -np.kron(r, ell.T) + np.kron(r.T, ell)
    return S


# S -----------------------------------------------------------------------------


@pytest.mark.parametrize("n,d", [(1, 3), (2, 3), (2, 2)])
def test_S_matches_dense_construction(n, d):
    b = build_basis(n, d)
    assert np.array_equal(dv.build_S(b).toarray(), dense_S(n, d))


@pytest.mark.parametrize("n,d", [(1, 3), (2, 4), (3, 3)])
def test_S_antisymmetric(n, d):
    S = dv.build_S(build_basis(n, d))
    assert (S.T + S).is_zero()


def test_S_norm_golden_value():
    # dense oracle on the 16-dim tensor square: the golden ratio
    est = spectral_norm(dv.build_S(build_basis(1, 3)).to_float())
    assert est.value == pytest.approx(np.linalg.norm(dense_S(1, 3), 2), abs=1e-12)
    assert est.value == pytest.approx((1 + math.sqrt(5)) / 2, abs=1e-12)


@pytest.mark.parametrize("n,d", [(1, 3), (1, 5), (2, 3), (2, 4), (3, 3), (3, 4)])
def test_S_norm_at_most_two(n, d):
    assert spectral_norm(dv.build_S(build_basis(n, d)).to_float()).value <= 2 + 1e-9


# delta --------------------------------------------------------------------------


def test_delta_of_identity_vanishes():
    b = build_basis(2, 3)
    assert dv.delta(b, LinOp.identity(b.dim)).is_zero()


@pytest.mark.parametrize("n,d", [(1, 3), (2, 4), (3, 4), (2, 5), (4, 4)])
def test_delta_on_generators_is_minus_vacuum_tensor_x(n, d):
    b = build_basis(n, d)
    keep = d - dv.DERIVATION_MARGIN
    for k in range(1, n + 1):
        got = b.compress(dv.delta(b, generators(b).x[k - 1]), keep)
        assert exact_eq(got, b.compress(dv.delta_generator_target(b, k, -1), keep))
        assert not exact_eq(got, b.compress(dv.delta_generator_target(b, k, +1), keep))


def test_delta_generator_sign_from_vacuum_action():
    # direct check on one vector: delta(x_1) (Omega (x) Omega) = -(Omega (x) e_1)
    b = build_basis(1, 4)
    D = b.dim
    v = np.zeros(D * D, dtype=np.int64)
    v[0] = 1
    out = dv.delta(b, generators(b).x[0]).apply(v)
    want = np.zeros(D * D, dtype=np.int64)
    want[b.index[(1,)]] = -1
    assert np.array_equal(out, want)


@pytest.mark.parametrize("n,d", [(1, 3), (2, 3), (2, 4)])
def test_factored_delta_equals_commutator_with_S(n, d):
    b = build_basis(n, d)
    rng = random.Random(7)
    S = dv.build_S(b)
    for _ in range(10):
        x = eval_poly(random_poly(n, 3, rng), generators(b).x)
        assert exact_eq(dv.delta(b, x), dv.delta(b, x, S))


def test_delta_rewrite_in_right_adjoints():
    b = build_basis(2, 5)
    rng = random.Random(11)
    keep = b.d - dv.DERIVATION_MARGIN
    for _ in range(50):
        x = eval_poly(random_poly(2, 3, rng), generators(b).x)
        assert exact_eq(b.compress(dv.delta(b, x), keep), b.compress(dv.delta_via_right_adjoints(b, x), keep))


def test_T0_implements_delta():
    for n, d in ((1, 3), (2, 4), (3, 4)):
        b = build_basis(n, d)
        T0 = dv.canonical_T0(b)
        keep = d - dv.DERIVATION_MARGIN
        for x in generators(b).x:
            assert exact_eq(b.compress(commutator(dv.ampliate(b, x), T0), keep), b.compress(dv.delta(b, x), keep))
        assert dv.derivation_residual(b, T0) == 0


def test_derivation_residual_detects_wrong_operator():
    b = build_basis(2, 4)
    assert dv.derivation_residual(b, dv.build_S(b) * 2) > 0.5


def test_derivation_residual_margin_error():
    b = build_basis(2, 3)
    with pytest.raises(dv.MarginError):
        dv.derivation_residual(b, dv.build_S(b), margin=4)


# Leibniz and u -------------------------------------------------------------------


def test_leibniz_trivial_and_generators():
    one = NcPoly.one()
    assert dv.leibniz_check(build_basis(2, 4), one, one)
    assert dv.leibniz_check(build_basis(2, 5), NcPoly.gen(1), NcPoly.gen(2))


def test_leibniz_margin_error():
    with pytest.raises(dv.MarginError):
        dv.leibniz_check(build_basis(2, 4), NcPoly.word((1, 2)), NcPoly.word((2, 1)))


@given(st.integers(0, 2**32))
@settings(max_examples=25, deadline=None)
def test_leibniz_random_pairs(seed):
    b = build_basis(2, 6)
    rng = random.Random(seed)
    p, q = random_poly(2, 2, rng), random_poly(2, 2, rng)
    assert dv.leibniz_check(b, p, q)
    assert dv.u_multiplicative(b, p, q)


def test_u_of_one_is_identity():
    b = build_basis(2, 3)
    assert exact_eq(dv.build_u(b, NcPoly.one()), LinOp.identity(2 * b.dim * b.dim))


def test_u_block_structure():
    b = build_basis(2, 3)
    p = NcPoly.gen(1) + NcPoly.word((1, 2), 2)
    u = dv.build_u(b, p).toarray()
    N = b.dim * b.dim
    X = eval_poly(p, generators(b).x)
    assert np.array_equal(u[:N, :N], dv.ampliate(b, X).toarray())
    assert np.array_equal(u[N:, N:], dv.ampliate(b, X).toarray())
    assert np.array_equal(u[:N, N:], dv.delta(b, X).toarray())
    assert not u[N:, :N].any()


def test_u_norm_at_most_three_times_pi():
    b = build_basis(2, 4)
    rng = random.Random(3)
    for _ in range(15):
        p = random_poly(2, 2, rng)
        if not p.terms:
            continue
        nu = spectral_norm(dv.build_u(b, p).to_float(), dense_max=256).value
        npi = spectral_norm(eval_poly(p, generators(b).x).to_float()).value
        assert nu <= 3 * npi + 1e-9


# P and z --------------------------------------------------------------------------


def test_range_projection_examples():
    b = build_basis(2, 4)
    x = generators(b).x
    assert exact_eq(dv.range_projection_P(b, x[0]), x[0])
    assert dv.range_projection_P(b, x[0] @ x[1]).is_zero()
    assert exact_eq(dv.range_projection_P(b, x[0] @ x[0] @ x[0]), x[0] * 2)


def test_extract_z_of_zero():
    b = build_basis(2, 3)
    zf = dv.extract_z(b, LinOp.zeros(b.dim * b.dim))
    assert all(z.is_zero() for z in zf.z)
    assert zf.row_norm == zf.col_norm == zf.t1_norm == 0


@pytest.mark.parametrize("n,d", [(1, 3), (2, 4), (3, 4)])
def test_extract_z_of_T0_recovers_right_adjoints(n, d):
    b = build_basis(n, d)
    g = generators(b)
    zf = dv.extract_z(b, dv.canonical_T0(b))
    for z, r in zip(zf.z, g.r):
        assert exact_eq(z, r.T)
    rows = cols = LinOp.zeros(b.dim)
    for z in zf.z:
        rows = rows + z @ z.T
        cols = cols + z.T @ z
    assert exact_eq(rows, level_projection(b, d - 1) * n)
    assert exact_eq(cols, LinOp.identity(b.dim) - vacuum_projection(b))
    assert zf.row_norm == pytest.approx(math.sqrt(n), abs=1e-10)
    assert zf.col_norm == pytest.approx(1.0, abs=1e-10)


def test_z_extraction_is_a_contraction_by_brute_force():
    b = build_basis(2, 3)
    rng = np.random.default_rng(0)
    D = b.dim
    t = rng.integers(-3, 4, size=(D * D, D * D)) * (rng.random((D * D, D * D)) < 0.05)
    T = LinOp(t.astype(np.int64))
    z = dv.z_coefficients(b, T)
    for j in range(1, 3):
        want = np.array([[t[a * D + b.index[(j,)], c * D] for c in range(D)] for a in range(D)])
        assert np.array_equal(z[j - 1].toarray(), want)


def test_commutant_memberships_for_T0():
    b = build_basis(2, 4)
    g = generators(b)
    z = dv.z_coefficients(b, dv.canonical_T0(b))
    keep = b.d - dv.DERIVATION_MARGIN
    for j in range(b.n):
        for x in g.x:
            assert b.compress(commutator(g.r[j].T - z[j], x), keep).is_zero()
            assert b.compress(commutator(g.r[j] + z[j], x), keep).is_zero()


# chain -------------------------------------------------------------------------------


def test_chain_on_T0_n4():
    rep = dv.chain_eval(build_basis(4, 4), dv.canonical_T0(build_basis(4, 4)))
    assert rep.sqrt_n == 2
    assert rep.sum_of_roots == pytest.approx(3.0, abs=1e-9)
    assert rep.all_hold
    assert rep.t_norm >= 2 - 1e-9


def test_chain_on_T0_n1():
    b = build_basis(1, 4)
    rep = dv.chain_eval(b, dv.canonical_T0(b))
    assert rep.sqrt_n == 1
    assert rep.sum_of_roots == pytest.approx(2.0, abs=1e-9)
    assert rep.all_hold
    assert rep.margins == pytest.approx(
        (rep.sum_of_roots - rep.sqrt_n, 2 * rep.t1_norm - rep.sum_of_roots, 4 * rep.t_norm - 2 * rep.t1_norm)
    )


def test_chain_on_perturbed_T0():
    b = build_basis(2, 3)
    y1 = generators(b).y[0]
    T = dv.canonical_T0(b).to_float() + dv.ampliate(b, y1).to_float() * 0.1
    rep = dv.chain_eval(b, T)
    assert rep.all_hold
    assert all(math.isfinite(m) for m in rep.margins)


def test_chain_reports_failure_rather_than_raising():
    b = build_basis(2, 3)
    rep = dv.chain_eval(b, LinOp.zeros(b.dim * b.dim))
    assert not rep.holds[0]
    with pytest.raises(ValueError):
        dv.similarity_bound(rep)


# generation rank -----------------------------------------------------------------------


@pytest.mark.parametrize(
    "n,d,word_len,margin,want",
    [(2, 3, 1, 1, 9), (2, 3, 0, 0, 1), (3, 4, 2, 2, 169), (2, 4, 2, 2, 49), (2, 4, 1, 2, None)],
)
def test_generation_rank(n, d, word_len, margin, want):
    b = build_basis(n, d)
    got = dv.generation_rank(b, word_len, margin)
    if want is None:
        # too short words cannot reach the whole compressed algebra
        assert got < b.level_dim(margin) ** 2
    else:
        assert got == want


def test_generation_rank_precondition():
    with pytest.raises(dv.MarginError):
        dv.generation_rank(build_basis(2, 3), 2, 1)


# cb sampling and bounds ------------------------------------------------------------------


def test_cb_ratio_of_identity_is_zero():
    b = build_basis(2, 4)
    assert dv.amplified_ratio(b, "delta", [[NcPoly.one()]]) == 0.0


def test_cb_sample_small():
    b = build_basis(2, 5)
    assert dv.cb_lower_sample(b, "delta", 1, 10, seed=1) <= 2 + 0.05
    assert dv.cb_lower_sample(b, "u", 1, 5, seed=1) <= 3 + 0.05


def test_cb_sample_is_deterministic():
    b = build_basis(2, 5)
    assert dv.cb_lower_sample(b, "delta", 2, 3, seed=5) == dv.cb_lower_sample(b, "delta", 2, 3, seed=5)


def test_cb_sample_argument_errors():
    b = build_basis(2, 5)
    with pytest.raises(ValueError):
        dv.cb_lower_sample(b, "delta", 5, 1)
    with pytest.raises(ValueError):
        dv.amplified_ratio(b, "other", [[NcPoly.one()]])


@pytest.mark.parametrize("n,cond", [(16, 1.0), (4, math.sqrt(0.5)), (64, math.sqrt(2))])
def test_similarity_bound_arithmetic(n, cond):
    rep = dv.ChainReport(n, 4, math.sqrt(n), 0, 0, 0, 0, 0, (True,) * 3, (0.0,) * 3, 0.0, 1e-9)
    bound = dv.similarity_bound(rep)
    assert bound.condition_number == pytest.approx(cond)
    assert bound.lifting_norm_sq == pytest.approx(math.sqrt(n) / 4)


def test_x_words():
    assert dv.x_words(2, 2) == [(), (1,), (2,), (1, 1), (1, 2), (2, 1), (2, 2)]
    b = build_basis(2, 3)
    assert exact_eq(eval_word((), generators(b).x, b.dim), LinOp.identity(b.dim))

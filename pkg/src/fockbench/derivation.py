"""The operator S, the inner derivation it implements, and the estimates around it.

Everything lives on truncations ``Q_d H`` and ``Q_d H (x) Q_d H``.  An identity
between products of ``m`` creator-type factors is only asserted after
compressing to depth ``d - m``, where truncation cannot be seen.
"""

from __future__ import annotations

import itertools
import math
import random
from dataclasses import dataclass
from functools import lru_cache
from typing import Sequence

import numpy as np

from .fock import FockBasis, NcPoly, eval_poly, eval_word, generators, random_poly, vacuum_projection
from .numkit import (
    DEFAULT_TOL,
    LinOp,
    block,
    commutator,
    exact_eq,
    kron,
    rank_of_span,
    spectral_norm,
)

DERIVATION_MARGIN = 2
# sampled norms run many times; beyond this size Lanczos beats a dense eigensolve
SAMPLE_DENSE_MAX = 256


class MarginError(ValueError):
    pass


@lru_cache(maxsize=16)
def build_S(b: FockBasis) -> LinOp:
    """``sum_j -r_j (x) l_j^T + r_j^T (x) l_j``; antisymmetric."""
    g = generators(b)
    out = LinOp.zeros(b.dim * b.dim)
    for ell, r in zip(g.ell, g.r):
        out = out - kron(r, ell.T) + kron(r.T, ell)
    return out


def ampliate(b: FockBasis, x: LinOp) -> LinOp:
    """``x (x) 1``."""
    return kron(x, LinOp.identity(b.dim, exact=x.exact))


def delta(b: FockBasis, x: LinOp, S: LinOp | None = None) -> LinOp:
    """``[x (x) 1, S]``.

    Without an explicit ``S`` the commutator is taken leg by leg:
    ``[x (x) 1, a (x) c] = [x, a] (x) c``, so only Fock-sized products are formed.
    """
    if S is not None:
        return commutator(ampliate(b, x), S)
    g = generators(b)
    out = LinOp.zeros(b.dim * b.dim, exact=x.exact)
    for ell, r in zip(g.ell, g.r):
        out = out - kron(commutator(x, r), ell.T) + kron(commutator(x, r.T), ell)
    return out


def delta_via_right_adjoints(b: FockBasis, x: LinOp) -> LinOp:
    """``sum_j [x, r_j^T] (x) x_j``, the rewritten form of the derivation."""
    g = generators(b)
    out = LinOp.zeros(b.dim * b.dim, exact=x.exact)
    for r, xj in zip(g.r, g.x):
        out = out + kron(commutator(x, r.T), xj)
    return out


def delta_generator_target(b: FockBasis, k: int, sign: int = -1) -> LinOp:
    """``sign * P_Omega (x) x_k``.

    With ``l_k`` prepending and ``r_k`` appending, ``[l_k, r_k^T] = -P_Omega``
    (both sides evaluated on the vacuum), so the derivation sends ``x_k`` to
    ``-P_Omega (x) x_k``.  ``sign=+1`` gives the opposite-sign form for
    comparison.
    """
    return kron(vacuum_projection(b), generators(b).x[k - 1]) * sign


def derivation_residual(b: FockBasis, T: LinOp, margin: int = DERIVATION_MARGIN, tol: float = DEFAULT_TOL) -> float:
    """max_k ||compress(delta(x_k) - [x_k (x) 1, T], d - margin)||.

    Generators suffice because both sides satisfy the Leibniz rule.  Exact
    operators give an exact zero when the equation holds.
    """
    depth = b.d - margin
    if depth < 0:
        raise MarginError(f"margin {margin} exceeds depth {b.d}")
    worst = 0.0
    for xk in generators(b).x:
        diff = b.compress(delta(b, xk) - commutator(ampliate(b, xk), T), depth)
        if diff.exact:
            if diff.is_zero():
                continue
        worst = max(worst, spectral_norm(diff, tol).value)
    return worst


def leibniz_check(b: FockBasis, p: NcPoly, q: NcPoly, margin: int | None = None) -> bool:
    """Exact compressed check of ``delta(pq) = delta(p)(q (x) 1) + (p (x) 1) delta(q)``."""
    if margin is None:
        margin = p.degree + q.degree + DERIVATION_MARGIN
    if p.degree + q.degree + DERIVATION_MARGIN > margin or margin > b.d:
        raise MarginError(
            f"degrees {p.degree}+{q.degree} need margin >= {p.degree + q.degree + DERIVATION_MARGIN} within depth {b.d}"
        )
    x = generators(b).x
    P, Q = eval_poly(p, x), eval_poly(q, x)
    lhs = delta(b, eval_poly(p * q, x))
    rhs = delta(b, P) @ ampliate(b, Q) + ampliate(b, P) @ delta(b, Q)
    depth = b.d - margin
    return exact_eq(b.compress(lhs, depth), b.compress(rhs, depth))


def range_projection_P(b: FockBasis, a: LinOp) -> LinOp:
    """``sum_j <x_j Omega, a Omega> x_j``; ``x_j Omega = e_(j)`` is orthonormal."""
    g = generators(b)
    column = a.mat[:, 0].toarray().ravel()
    out = LinOp.zeros(b.dim, exact=a.exact)
    for j, xj in enumerate(g.x, start=1):
        c = column[b.index[(j,)]]
        if c:
            out = out + xj * (int(c) if a.exact else float(c))
    return out


@dataclass(frozen=True)
class ZFamily:
    z: tuple[LinOp, ...]
    row_norm: float
    col_norm: float
    t1_norm: float

    def t1(self, b: FockBasis) -> LinOp:
        return sum_z_tensor_x(b, self.z)


def sum_z_tensor_x(b: FockBasis, z: Sequence[LinOp]) -> LinOp:
    g = generators(b)
    out = LinOp.zeros(b.dim * b.dim, exact=all(zj.exact for zj in z))
    for zj, xj in zip(z, g.x):
        out = out + kron(zj, xj)
    return out


def z_coefficients(b: FockBasis, T: LinOp) -> tuple[LinOp, ...]:
    """``z_j(a, c) = <e_a (x) e_(j), T (e_c (x) Omega)>``."""
    D = b.dim
    if T.shape != (D * D, D * D):
        raise ValueError(f"T must act on H (x) H of dim {D * D}")
    cols = np.arange(D) * D
    out = []
    for j in range(1, b.n + 1):
        rows = np.arange(D) * D + b.index[(j,)]
        out.append(LinOp(T.mat[rows][:, cols], exact=T.exact))
    return tuple(out)


def extract_z(b: FockBasis, T: LinOp, tol: float = DEFAULT_TOL) -> ZFamily:
    z = z_coefficients(b, T)
    zf = [zj.to_float() for zj in z]
    rows = LinOp.zeros(b.dim, exact=False)
    cols = LinOp.zeros(b.dim, exact=False)
    for zj in zf:
        rows = rows + zj @ zj.T
        cols = cols + zj.T @ zj
    return ZFamily(
        z=z,
        row_norm=math.sqrt(spectral_norm(rows, tol).value),
        col_norm=math.sqrt(spectral_norm(cols, tol).value),
        t1_norm=spectral_norm(sum_z_tensor_x(b, zf), tol).value,
    )


@lru_cache(maxsize=16)
def canonical_T0(b: FockBasis) -> LinOp:
    """``sum_j r_j^T (x) x_j``; implements the derivation."""
    g = generators(b)
    return sum_z_tensor_x(b, [r.T for r in g.r])


@dataclass(frozen=True)
class ChainReport:
    n: int
    d: int
    sqrt_n: float
    row_norm: float
    col_norm: float
    sum_of_roots: float
    t1_norm: float
    t_norm: float
    holds: tuple[bool, bool, bool]
    margins: tuple[float, float, float]
    derivation_residual: float
    tol: float

    @property
    def all_hold(self) -> bool:
        return all(self.holds)

    def as_dict(self) -> dict:
        return {
            "n": self.n,
            "d": self.d,
            "sqrtN": self.sqrt_n,
            "rowNorm": self.row_norm,
            "colNorm": self.col_norm,
            "sumOfRoots": self.sum_of_roots,
            "t1Norm": self.t1_norm,
            "tNorm": self.t_norm,
            "margin1": self.margins[0],
            "margin2": self.margins[1],
            "margin3": self.margins[2],
            "derivationResidual": self.derivation_residual,
        }


def chain_eval(b: FockBasis, T: LinOp, tol: float = 1e-9, *, norm_tol: float = DEFAULT_TOL) -> ChainReport:
    """Evaluate ``sqrt(n) <= row + col <= 2||T_1|| <= 4||T||`` for an implementing ``T``.

    Failures are reported in ``holds``; a link holds when its margin is at
    least ``-tol``.
    """
    zf = extract_z(b, T, norm_tol)
    t_norm = spectral_norm(T.to_float(), norm_tol).value
    sqrt_n = math.sqrt(b.n)
    roots = zf.row_norm + zf.col_norm
    pairs = ((sqrt_n, roots), (roots, 2 * zf.t1_norm), (2 * zf.t1_norm, 4 * t_norm))
    margins = tuple(float(rhs - lhs) for lhs, rhs in pairs)
    return ChainReport(
        n=b.n,
        d=b.d,
        sqrt_n=sqrt_n,
        row_norm=zf.row_norm,
        col_norm=zf.col_norm,
        sum_of_roots=roots,
        t1_norm=zf.t1_norm,
        t_norm=t_norm,
        holds=tuple(m >= -tol for m in margins),
        margins=margins,
        derivation_residual=derivation_residual(b, T),
        tol=tol,
    )


def x_words(n: int, max_len: int) -> list[tuple[int, ...]]:
    out: list[tuple[int, ...]] = []
    for k in range(max_len + 1):
        out.extend(itertools.product(range(1, n + 1), repeat=k))
    return out


def generation_rank(b: FockBasis, word_len: int, margin: int) -> int:
    """Rank of ``{compress(pi(a) P_Omega pi(c), margin)}`` over x-words a, c of length <= word_len.

    Equals ``level_dim(margin)**2`` when the compressed operators fill the
    full matrix algebra on ``Q_margin H``.
    """
    if word_len > margin:
        raise MarginError("word_len must not exceed margin")
    if word_len + margin > b.d:
        raise MarginError(f"word_len + margin = {word_len + margin} exceeds depth {b.d}")
    g = generators(b)
    p0 = vacuum_projection(b)
    words = x_words(b.n, word_len)
    left = [eval_word(w, g.x, b.dim) @ p0 for w in words]
    right = [eval_word(w, g.x, b.dim) for w in words]
    ops = [b.compress(a @ c, margin) for a in left for c in right]
    return rank_of_span(ops)


def build_u_operator(b: FockBasis, x: LinOp, S: LinOp | None = None) -> LinOp:
    diag = ampliate(b, x)
    return block([[diag, delta(b, x, S)], [None, diag]])


def build_u(b: FockBasis, p: NcPoly) -> LinOp:
    """Upper triangular block ``[[pi(p) (x) 1, delta(pi(p))], [0, pi(p) (x) 1]]``."""
    return build_u_operator(b, eval_poly(p, generators(b).x))


def u_multiplicative(b: FockBasis, p: NcPoly, q: NcPoly, margin: int | None = None) -> bool:
    if margin is None:
        margin = p.degree + q.degree + DERIVATION_MARGIN
    if margin > b.d:
        raise MarginError(f"margin {margin} exceeds depth {b.d}")
    depth = b.d - margin
    lhs = b.compress(build_u(b, p * q), depth)
    rhs = b.compress(build_u(b, p) @ build_u(b, q), depth)
    return exact_eq(lhs, rhs)


def amplified_ratio(
    b: FockBasis,
    kind: str,
    polys: Sequence[Sequence[NcPoly]],
    tol: float = 1e-8,
    *,
    dense_max: int = SAMPLE_DENSE_MAX,
) -> float:
    """``||(id_k (x) map)(X)|| / ||X||`` for the k x k matrix ``X = [pi(p_ab)]``."""
    if kind not in ("delta", "u"):
        raise ValueError(f"unknown map {kind!r}")
    x = generators(b).x
    k = len(polys)
    if k == 0 or any(len(row) != k for row in polys):
        raise ValueError("polys must be a square k x k array")
    entries = [[eval_poly(p, x) for p in row] for row in polys]
    X = block(entries)
    fn = (lambda a: delta(b, a)) if kind == "delta" else (lambda a: build_u_operator(b, a))
    Y = block([[fn(a) for a in row] for row in entries])
    nx = spectral_norm(X.to_float(), tol, dense_max=dense_max).value
    if nx == 0:
        return 0.0
    return spectral_norm(Y.to_float(), tol, dense_max=dense_max).value / nx


def cb_lower_sample(
    b: FockBasis,
    kind: str,
    k: int,
    trials: int,
    seed: int = 42,
    *,
    degree: int = 3,
    tol: float = 1e-8,
) -> float:
    """Largest sampled amplified ratio at level k: a lower bound on the cb norm of the map.

    Trial t draws its k x k matrix of random polynomials from its own seed, so
    the result does not depend on evaluation order.
    """
    if not 1 <= k <= 4:
        raise ValueError("amplification k must be in 1..4")
    if degree + DERIVATION_MARGIN > b.d:
        raise MarginError(f"degree {degree} too large for depth {b.d}")
    best = 0.0
    for t in range(trials):
        rng = random.Random(f"cb:{seed}:{t}")
        polys = [[random_poly(b.n, degree, rng) for _ in range(k)] for _ in range(k)]
        best = max(best, amplified_ratio(b, kind, polys, tol))
    return best


@dataclass(frozen=True)
class SimilarityBound:
    n: int
    lifting_norm_sq: float
    condition_number: float


def similarity_bound(report: ChainReport) -> SimilarityBound:
    """Lower bounds implied by ``||T|| >= sqrt(n)/4``.

    Any similarity ``S`` turning u into a *-homomorphism yields an implementing
    ``T`` with ``||T|| <= (||S|| ||S^-1||)^2``, so the condition number is at
    least ``n**0.25 / 2``; a cb lifting has ``||u_hat||_cb**2 >= sqrt(n)/4``.
    """
    if not report.all_hold:
        raise ValueError("chain does not hold; no bound can be derived")
    sq = math.sqrt(report.n) / 4
    return SimilarityBound(n=report.n, lifting_norm_sq=sq, condition_number=math.sqrt(sq))

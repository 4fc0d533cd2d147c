"""Scalar-generic sparse linear algebra.

Operators are thin immutable wrappers around ``scipy.sparse.csr_matrix`` with
one of two scalar modes: exact (``int64`` with overflow checks on every
arithmetic step) and float (``float64``).  Identities are checked in exact mode
and norms are estimated in float mode.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np
import scipy.linalg
import scipy.sparse.linalg
import scipy.sparse as sp

INT_LIMIT = 2**62
DENSE_MAX_DIM = 2000
DEFAULT_TOL = 1e-10
DEFAULT_MAX_ITER = 20000
DEFAULT_SEED = 0
STALL_WINDOW = 50
STALL_MIN_ITER = 200
STALL_PATIENCE = 2000


class ExactOverflowError(ArithmeticError):
    """An exact-mode result would not fit in 64-bit signed integers."""

    def __init__(self, what: str):
        super().__init__(
            f"exact-mode overflow in {what}; reduce the truncation depth or use float mode"
        )


class ScalarModeError(TypeError):
    pass


def _canonical(mat: sp.spmatrix, dtype) -> sp.csr_matrix:
    out = sp.csr_matrix(mat, dtype=dtype, copy=True)
    out.sum_duplicates()
    out.eliminate_zeros()
    out.sort_indices()
    return out


def _max_abs(mat: sp.csr_matrix) -> float:
    return float(abs(mat.data).max()) if mat.nnz else 0.0


class LinOp:
    """Sparse operator in exact (int64) or float (float64) mode.

    Treat instances as immutable; every operation returns a new operator.
    """

    __slots__ = ("_mat",)

    def __init__(self, mat, *, exact: bool | None = None):
        if not sp.issparse(mat):
            mat = np.asarray(mat)
            if exact is None:
                exact = np.issubdtype(mat.dtype, np.integer) or mat.dtype == bool
        elif exact is None:
            exact = np.issubdtype(mat.dtype, np.integer) or mat.dtype == bool
        if exact:
            if sp.issparse(mat):
                data = mat.data if mat.nnz else np.zeros(0)
            else:
                data = mat
            if np.issubdtype(np.asarray(data).dtype, np.floating):
                if not np.all(np.mod(data, 1) == 0):
                    raise ScalarModeError("non-integer entries cannot be stored in exact mode")
                if data.size and np.abs(data).max() >= INT_LIMIT:
                    raise ExactOverflowError("construction")
        self._mat = _canonical(mat, np.int64 if exact else np.float64)

    # construction helpers -------------------------------------------------

    @classmethod
    def from_entries(cls, shape, rows, cols, values, *, exact: bool = True) -> LinOp:
        mat = sp.coo_matrix((values, (rows, cols)), shape=shape)
        return cls(mat, exact=exact)

    @classmethod
    def identity(cls, dim: int, *, exact: bool = True) -> LinOp:
        return cls(sp.identity(dim, format="csr"), exact=exact)

    @classmethod
    def zeros(cls, nrows: int, ncols: int | None = None, *, exact: bool = True) -> LinOp:
        return cls(sp.csr_matrix((nrows, nrows if ncols is None else ncols)), exact=exact)

    @classmethod
    def diagonal(cls, values, *, exact: bool = True) -> LinOp:
        return cls(sp.diags(np.asarray(values), format="csr"), exact=exact)

    # basic properties -----------------------------------------------------

    @property
    def mat(self) -> sp.csr_matrix:
        return self._mat

    @property
    def shape(self) -> tuple[int, int]:
        return self._mat.shape

    @property
    def nrows(self) -> int:
        return self._mat.shape[0]

    @property
    def ncols(self) -> int:
        return self._mat.shape[1]

    @property
    def nnz(self) -> int:
        return self._mat.nnz

    @property
    def exact(self) -> bool:
        return self._mat.dtype == np.int64

    def entries(self) -> list[tuple[int, int, int | float]]:
        coo = self._mat.tocoo()
        conv = int if self.exact else float
        return [(int(r), int(c), conv(v)) for r, c, v in zip(coo.row, coo.col, coo.data)]

    def to_float(self) -> LinOp:
        return self if not self.exact else LinOp(self._mat, exact=False)

    def to_exact(self) -> LinOp:
        return self if self.exact else LinOp(self._mat, exact=True)

    def toarray(self) -> np.ndarray:
        return self._mat.toarray()

    def max_abs(self) -> float:
        return _max_abs(self._mat)

    def is_zero(self) -> bool:
        return self._mat.nnz == 0

    def __repr__(self) -> str:
        mode = "exact" if self.exact else "float"
        return f"LinOp({self.nrows}x{self.ncols}, nnz={self.nnz}, {mode})"

    # arithmetic -----------------------------------------------------------

    @property
    def T(self) -> LinOp:
        return LinOp(self._mat.T, exact=self.exact)

    def transpose(self) -> LinOp:
        return self.T

    def _coerce(self, other: LinOp) -> tuple[sp.csr_matrix, sp.csr_matrix, bool]:
        if not isinstance(other, LinOp):
            return NotImplemented
        exact = self.exact and other.exact
        a, b = self._mat, other._mat
        if not exact:
            a, b = a.astype(np.float64), b.astype(np.float64)
        return a, b, exact

    def __add__(self, other: LinOp) -> LinOp:
        if not isinstance(other, LinOp):
            return NotImplemented
        if self.shape != other.shape:
            raise ValueError(f"shape mismatch {self.shape} vs {other.shape}")
        a, b, exact = self._coerce(other)
        if exact and _max_abs(a) + _max_abs(b) >= INT_LIMIT:
            raise ExactOverflowError("addition")
        return LinOp(a + b, exact=exact)

    def __neg__(self) -> LinOp:
        return LinOp(-self._mat, exact=self.exact)

    def __sub__(self, other: LinOp) -> LinOp:
        if not isinstance(other, LinOp):
            return NotImplemented
        return self + (-other)

    def __mul__(self, scalar) -> LinOp:
        if isinstance(scalar, LinOp):
            raise TypeError("use @ for operator products")
        if self.exact and isinstance(scalar, (int, np.integer)):
            if abs(int(scalar)) * self.max_abs() >= INT_LIMIT:
                raise ExactOverflowError("scaling")
            return LinOp(self._mat * int(scalar), exact=True)
        return LinOp(self._mat.astype(np.float64) * float(scalar), exact=False)

    __rmul__ = __mul__

    def __matmul__(self, other: LinOp) -> LinOp:
        if not isinstance(other, LinOp):
            return NotImplemented
        if self.ncols != other.nrows:
            raise ValueError(f"cannot multiply {self.shape} by {other.shape}")
        a, b, exact = self._coerce(other)
        if exact:
            _check_product_bound(a, b, "product")
        return LinOp(a @ b, exact=exact)

    def apply(self, vec) -> np.ndarray:
        return self._mat @ np.asarray(vec)

    def trace(self):
        t = self._mat.diagonal().sum()
        return int(t) if self.exact else float(t)


def _check_product_bound(a: sp.csr_matrix, b: sp.csr_matrix, what: str) -> None:
    if a.nnz == 0 or b.nnz == 0:
        return
    row_nnz = int(np.diff(a.indptr).max())
    if _max_abs(a) * _max_abs(b) * row_nnz < INT_LIMIT:
        return
    # the cheap bound failed; fall back to the entrywise bound |A||B|
    bound = abs(a).astype(np.float64) @ abs(b).astype(np.float64)
    if bound.nnz and bound.data.max() >= INT_LIMIT / 2:
        raise ExactOverflowError(what)


def kron(a: LinOp, b: LinOp) -> LinOp:
    """Kronecker product, first leg major: index(v, w) = idx(v) * dim2 + idx(w)."""
    exact = a.exact and b.exact
    if exact and a.max_abs() * b.max_abs() >= INT_LIMIT:
        raise ExactOverflowError("kron")
    ma, mb = a.mat, b.mat
    if not exact:
        ma, mb = ma.astype(np.float64), mb.astype(np.float64)
    return LinOp(sp.kron(ma, mb, format="csr"), exact=exact)


def commutator(a: LinOp, b: LinOp) -> LinOp:
    """Return ``AB - BA``."""
    if a.shape != b.shape or a.nrows != a.ncols:
        raise ValueError(f"commutator needs equal square shapes, got {a.shape} and {b.shape}")
    return a @ b - b @ a


def block(rows: Sequence[Sequence[LinOp | None]]) -> LinOp:
    """Assemble a block operator; ``None`` blocks are zero."""
    exact = all(x.exact for row in rows for x in row if x is not None)
    dtype = np.int64 if exact else np.float64
    mats = [[None if x is None else x.mat.astype(dtype) for x in row] for row in rows]
    return LinOp(sp.bmat(mats, format="csr"), exact=exact)


def prefix_indices(keep: int, leg_dim: int, legs: int = 1) -> np.ndarray:
    """Flat indices of the product of the first ``keep`` basis vectors on each leg."""
    idx = np.arange(keep)
    for _ in range(legs - 1):
        idx = (idx[:, None] * leg_dim + np.arange(keep)[None, :]).ravel()
    return idx


def compress(a: LinOp, keep: int, leg_dim: int | None = None, legs: int = 1, blocks: int = 1) -> LinOp:
    """Restrict ``a`` to the span of the first ``keep`` basis vectors of each leg.

    With a graded basis ordered by length, the first ``keep`` vectors are
    exactly the words of length at most ``k``, so this is ``Q_k A Q_k``
    restricted to its range.  ``blocks`` handles ``blocks x blocks`` block
    operators whose blocks act on the same tensor power.
    """
    leg_dim = a.nrows if leg_dim is None else leg_dim
    size = leg_dim**legs
    if a.nrows != a.ncols or a.nrows != blocks * size:
        raise ValueError(f"operator of shape {a.shape} is not {blocks} blocks of {legs} legs of dim {leg_dim}")
    if not 0 <= keep <= leg_dim:
        raise ValueError(f"keep={keep} outside 0..{leg_dim}")
    base = prefix_indices(keep, leg_dim, legs)
    idx = np.concatenate([base + i * size for i in range(blocks)])
    return LinOp(a.mat[idx][:, idx], exact=a.exact)


def exact_eq(a: LinOp, b: LinOp) -> bool:
    if not (a.exact and b.exact):
        raise ScalarModeError("exact_eq requires exact-mode operators")
    if a.shape != b.shape:
        return False
    diff = a.mat - b.mat
    diff.eliminate_zeros()
    return diff.nnz == 0


def rank_of_span(ops: Iterable[LinOp]) -> int:
    """Dimension of the linear span of ``ops`` viewed as flat vectors.

    Exact mode uses fraction-free (Bareiss) elimination on int64 rows, which
    keeps every intermediate an integer minor of the input.
    """
    ops = list(ops)
    if not ops:
        return 0
    shape = ops[0].shape
    if any(op.shape != shape for op in ops):
        raise ValueError("rank_of_span needs operators of identical shape")
    exact = all(op.exact for op in ops)
    rows = sp.vstack([op.mat.reshape(1, shape[0] * shape[1]) for op in ops], format="csc")
    live = np.flatnonzero(np.diff(rows.indptr))
    dense = rows[:, live].toarray()
    if not exact:
        return int(np.linalg.matrix_rank(dense.astype(np.float64))) if dense.size else 0
    return _bareiss_rank(dense.astype(np.int64))


def rank(a: LinOp) -> int:
    """Matrix rank; exact elimination in exact mode."""
    dense = a.toarray()
    if not a.exact:
        return int(np.linalg.matrix_rank(dense)) if dense.size else 0
    return _bareiss_rank(dense)


def _bareiss_rank(m: np.ndarray) -> int:
    m = m.copy()
    nrows, ncols = m.shape
    rank = 0
    prev = 1
    for col in range(ncols):
        if rank == nrows:
            break
        cand = np.flatnonzero(m[rank:, col]) + rank
        if cand.size == 0:
            continue
        piv = cand[np.argmin(np.abs(m[cand, col]))]
        if piv != rank:
            m[[rank, piv]] = m[[piv, rank]]
        p = int(m[rank, col])
        below = m[rank + 1 :]
        if below.size:
            factors = below[:, col].copy()
            bound = abs(p) * int(np.abs(below).max()) + int(np.abs(factors).max()) * int(np.abs(m[rank]).max())
            if bound >= INT_LIMIT:
                raise ExactOverflowError("fraction-free elimination")
            upd = p * below - factors[:, None] * m[rank][None, :]
            if np.any(upd % prev):
                raise AssertionError("Bareiss division was not exact")
            m[rank + 1 :] = upd // prev
        prev = p
        rank += 1
    return rank


@dataclass(frozen=True)
class NormEstimate:
    value: float
    residual: float
    iterations: int
    method: str
    converged: bool = True

    def __float__(self) -> float:
        return self.value


def spectral_norm(
    a: LinOp,
    tol: float = DEFAULT_TOL,
    *,
    max_iter: int = DEFAULT_MAX_ITER,
    seed: int = DEFAULT_SEED,
    dense_max: int = DENSE_MAX_DIM,
    v0: np.ndarray | None = None,
    return_vector: bool = False,
    lanczos_fallback: bool = True,
    patience: int = STALL_PATIENCE,
):
    """Largest singular value of ``a``.

    The returned value is ``sqrt(v' A'A v)`` at a concrete unit vector, hence a
    lower bound on the true norm.  ``residual`` is ``||A'A v - rho v|| / rho``.
    Small operators go through a dense symmetric eigensolver; larger ones use
    power iteration on ``A'A`` from a seeded Gaussian start (or ``v0``).
    When power iteration stalls on clustered singular values (its observed
    residual decay would not reach ``tol`` within ``patience`` iterations) it
    hands over to ARPACK Lanczos started from its best iterate
    (``method="lanczos"``).
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    mat = a.mat.astype(np.float64)
    n = mat.shape[1]
    if mat.nnz == 0 or n == 0:
        est = NormEstimate(0.0, 0.0, 0, "dense-eigensolver" if n <= dense_max else "power-iteration")
        return (est, np.zeros(n)) if return_vector else est

    mat_t = mat.T.tocsr()

    def gram(v):
        return mat_t @ (mat @ v)

    if n <= dense_max:
        dense = mat.toarray()
        g = dense.T @ dense
        _, vecs = scipy.linalg.eigh(g, subset_by_index=[n - 1, n - 1])
        v = vecs[:, 0]
        gv = g @ v
        rho = float(v @ gv)
        resid = float(np.linalg.norm(gv - rho * v) / rho) if rho > 0 else 0.0
        est = NormEstimate(float(np.sqrt(max(rho, 0.0))), resid, 1, "dense-eigensolver", True)
        return (est, v) if return_vector else est

    if v0 is None:
        v = np.random.default_rng(seed).standard_normal(n)
    else:
        v = np.array(v0, dtype=np.float64)
    v /= np.linalg.norm(v)
    best = (-1.0, np.inf, v)
    rho, resid, it = 0.0, np.inf, 0
    window: list[float] = []
    for it in range(1, max_iter + 1):
        w = gram(v)
        rho = float(v @ w)
        if rho <= 0:
            est = NormEstimate(0.0, 0.0, it, "power-iteration", True)
            return (est, v) if return_vector else est
        resid = float(np.linalg.norm(w - rho * v) / rho)
        if rho > best[0]:
            best = (rho, resid, v)
        if resid <= tol:
            break
        v = w / np.linalg.norm(w)
        if it % STALL_WINDOW == 0:
            window.append(resid)
            if it >= STALL_MIN_ITER and _stalled(window, tol, min(max_iter, patience) - it):
                break
    converged = resid <= tol
    if not converged:
        rho, resid, v = best
    est = NormEstimate(float(np.sqrt(rho)), resid, it, "power-iteration", converged)
    if not converged and lanczos_fallback:
        alt, alt_v = _lanczos(mat, v, tol, it)
        if alt.converged or alt.value > est.value:
            est, v = alt, alt_v
    return (est, v) if return_vector else est


def _stalled(window: list[float], tol: float, remaining: int) -> bool:
    """Whether the residual decay seen over the last window cannot reach ``tol`` in time."""
    if len(window) < 2:
        return False
    prev, cur = window[-2], window[-1]
    if cur >= prev:
        return True
    rate = (cur / prev) ** (1.0 / STALL_WINDOW)
    needed = np.log(tol / cur) / np.log(rate)
    return needed > remaining


def _lanczos(mat: sp.csr_matrix, start: np.ndarray, tol: float, used: int) -> tuple[NormEstimate, np.ndarray]:
    n = mat.shape[1]
    mat_t = mat.T.tocsr()
    gram = scipy.sparse.linalg.LinearOperator((n, n), matvec=lambda v: mat_t @ (mat @ v), dtype=np.float64)
    try:
        _, vecs = scipy.sparse.linalg.eigsh(gram, k=1, which="LA", v0=start, tol=tol / 10, ncv=min(n, 40))
        v = vecs[:, 0]
    except scipy.sparse.linalg.ArpackNoConvergence as err:
        if err.eigenvectors is None or err.eigenvectors.shape[1] == 0:
            return NormEstimate(0.0, np.inf, used, "lanczos", False), start
        v = err.eigenvectors[:, 0]
    v = v / np.linalg.norm(v)
    w = gram @ v
    rho = float(v @ w)
    resid = float(np.linalg.norm(w - rho * v) / rho) if rho > 0 else 0.0
    return NormEstimate(float(np.sqrt(max(rho, 0.0))), resid, used, "lanczos", resid <= tol), v


def norm(a: LinOp, tol: float = DEFAULT_TOL, **kwargs) -> float:
    return spectral_norm(a, tol, **kwargs).value

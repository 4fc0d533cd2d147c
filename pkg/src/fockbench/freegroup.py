"""Truncated regular representations of the free group F_n.

Letters are signed integers: ``j`` is the generator g_j and ``-j`` its inverse.
Words are reduced and ordered by length, then by letter order
1 < -1 < 2 < -2 < ...; the identity comes first.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from functools import cached_property, lru_cache
from typing import Iterable, Sequence

import numpy as np
import scipy.sparse as sp

from .fock import DEFAULT_MAX_DIM, DimensionCapError
from .numkit import LinOp, commutator, compress, kron

Word = tuple[int, ...]


def reduce_word(word: Iterable[int]) -> Word:
    out: list[int] = []
    for c in word:
        if c == 0:
            raise ValueError("0 is not a letter")
        if out and out[-1] == -c:
            out.pop()
        else:
            out.append(c)
    return tuple(out)


def inverse(word: Sequence[int]) -> Word:
    return tuple(-c for c in reversed(word))


def word_count(n: int, d: int) -> int:
    return 1 + sum(2 * n * (2 * n - 1) ** (k - 1) for k in range(1, d + 1))


@dataclass(frozen=True, eq=False)
class FGBasis:
    n: int
    d: int
    words: tuple[Word, ...] = field(repr=False)

    def __eq__(self, other) -> bool:
        return isinstance(other, FGBasis) and (self.n, self.d) == (other.n, other.d)

    def __hash__(self) -> int:
        return hash((FGBasis, self.n, self.d))

    @cached_property
    def index(self) -> dict[Word, int]:
        return {w: i for i, w in enumerate(self.words)}

    @property
    def dim(self) -> int:
        return len(self.words)

    def level_dim(self, k: int) -> int:
        if not 0 <= k <= self.d:
            raise ValueError(f"level {k} outside 0..{self.d}")
        return word_count(self.n, k)

    def compress(self, a: LinOp, k: int) -> LinOp:
        keep = self.level_dim(k)
        legs = 1 if a.nrows == self.dim else 2
        return compress(a, keep, self.dim, legs=legs)


def letters(n: int) -> list[int]:
    return [s * j for j in range(1, n + 1) for s in (1, -1)]


def build_fg_basis(n: int, d: int, *, max_dim: int = DEFAULT_MAX_DIM) -> FGBasis:
    if n < 1 or d < 1:
        raise ValueError("need n >= 1 and d >= 1")
    if word_count(n, d) > max_dim:
        raise DimensionCapError(f"free group basis for n={n}, d={d} exceeds cap {max_dim}")
    alphabet = letters(n)
    words: list[Word] = [()]
    level: list[Word] = [()]
    for _ in range(d):
        level = [w + (c,) for w in level for c in alphabet if not (w and w[-1] == -c)]
        words.extend(level)
    return FGBasis(n, d, tuple(words))


def _translate(b: FGBasis, image, keep=lambda w: True) -> LinOp:
    rows, cols = [], []
    for i, w in enumerate(b.words):
        if not keep(w):
            continue
        v = reduce_word(image(w))
        if len(v) <= b.d:
            rows.append(b.index[v])
            cols.append(i)
    return LinOp.from_entries((b.dim, b.dim), rows, cols, np.ones(len(rows), dtype=np.int64))


def _check(b: FGBasis, j: int) -> None:
    if j == 0 or abs(j) > b.n:
        raise ValueError(f"letter {j} outside +-1..{b.n}")


def left_regular(b: FGBasis, j: int) -> LinOp:
    """e_w -> e_{g_j w}, zero when the reduced word leaves depth d."""
    _check(b, j)
    return _translate(b, lambda w: (j,) + w)


def right_regular(b: FGBasis, j: int) -> LinOp:
    """e_w -> e_{w g_j}, zero when the reduced word leaves depth d."""
    _check(b, j)
    return _translate(b, lambda w: w + (j,))


def haagerup_split(b: FGBasis, j: int) -> tuple[LinOp, LinOp]:
    """Split ``rho(g_j)`` into its length-increasing and length-decreasing parts."""
    _check(b, j)
    grows = lambda w: not (w and w[-1] == -j)  # noqa: E731
    a = _translate(b, lambda w: w + (j,), grows)
    c = _translate(b, lambda w: w + (j,), lambda w: not grows(w))
    return a, c


@dataclass(frozen=True)
class QuadraticSums:
    """The four quadratic sums of the split and whether each is a 0/1 diagonal <= I."""

    a_aT: LinOp
    bT_b: LinOp
    aT_a: LinOp
    b_bT: LinOp

    @staticmethod
    def contractive(s: LinOp) -> bool:
        m = s.mat
        off = m - _diag_part(m)
        if off.nnz:
            return False
        diag = m.diagonal()
        return bool(np.all((diag == 0) | (diag == 1)))

    def flags(self) -> dict[str, bool]:
        return {name: self.contractive(getattr(self, name)) for name in ("a_aT", "bT_b", "aT_a", "b_bT")}


def _diag_part(m):
    return sp.diags(m.diagonal(), format="csr", dtype=m.dtype)


def quadratic_sums(b: FGBasis) -> QuadraticSums:
    zero = LinOp.zeros(b.dim)
    a_aT = bT_b = aT_a = b_bT = zero
    for j in range(1, b.n + 1):
        a, c = haagerup_split(b, j)
        a_aT = a_aT + a @ a.T
        bT_b = bT_b + c.T @ c
        aT_a = aT_a + a.T @ a
        b_bT = b_bT + c @ c.T
    return QuadraticSums(a_aT, bT_b, aT_a, b_bT)


@lru_cache(maxsize=16)
def implementing_operator(b: FGBasis) -> LinOp:
    """``sum_j a_j (x) lambda(g_j)``; the derivation below is ``[x (x) 1, .]`` of it."""
    out = LinOp.zeros(b.dim * b.dim)
    for j in range(1, b.n + 1):
        a, _ = haagerup_split(b, j)
        out = out + kron(a, left_regular(b, j))
    return out


def delta_G(b: FGBasis, x: LinOp) -> LinOp:
    """``sum_j [x, a_j] (x) lambda(g_j)``."""
    out = LinOp.zeros(b.dim * b.dim, exact=x.exact)
    for j in range(1, b.n + 1):
        a, _ = haagerup_split(b, j)
        out = out + kron(commutator(x, a), left_regular(b, j))
    return out


def first_leg_support(b: FGBasis, t: LinOp) -> int:
    """Longest word length touched on the first leg by a nonzero entry of ``t``."""
    coo = t.mat.tocoo()
    if coo.nnz == 0:
        return -1
    leg = math.isqrt(t.nrows)
    first = np.concatenate([coo.row // leg, coo.col // leg])
    return max(len(b.words[i]) for i in np.unique(first))


def random_lambda_word(n: int, length: int, rng) -> Word:
    return tuple(rng.choice(letters(n)) for _ in range(length))


def eval_lambda_word(b: FGBasis, word: Sequence[int]) -> LinOp:
    out = LinOp.identity(b.dim)
    for c in word:
        out = out @ left_regular(b, c)
    return out


def all_words(n: int, d: int) -> Iterable[Word]:
    """Every (not necessarily reduced) word over the signed alphabet up to length d."""
    for k in range(d + 1):
        yield from itertools.product(letters(n), repeat=k)

"""Truncated full Fock space, creators, semicirculars and noncommutative polynomials."""

from __future__ import annotations

import itertools
import random
from dataclasses import dataclass, field
from functools import cached_property, lru_cache
from typing import Iterable, Sequence

import numpy as np

from .numkit import LinOp, compress, kron

DEFAULT_MAX_DIM = 200_000

Word = tuple[int, ...]


class DimensionCapError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class FockBasis:
    """Words of length <= d over letters 1..n, ordered by length then lexicographically."""

    n: int
    d: int
    words: tuple[Word, ...] = field(repr=False)

    def __eq__(self, other) -> bool:
        return isinstance(other, FockBasis) and (self.n, self.d) == (other.n, other.d)

    def __hash__(self) -> int:
        return hash((FockBasis, self.n, self.d))

    @cached_property
    def index(self) -> dict[Word, int]:
        return {w: i for i, w in enumerate(self.words)}

    @property
    def dim(self) -> int:
        return len(self.words)

    def level_dim(self, k: int) -> int:
        """Number of words of length <= k."""
        if not 0 <= k <= self.d:
            raise ValueError(f"level {k} outside 0..{self.d}")
        return sum(self.n**i for i in range(k + 1))

    def compress(self, a: LinOp, k: int) -> LinOp:
        """Compress ``a`` to words of length <= k on every leg.

        Accepts operators on H, on H (x) H, and 2x2 block operators on H (x) H.
        """
        keep = self.level_dim(k)
        dim = self.dim
        if a.nrows == dim:
            return compress(a, keep, dim, legs=1)
        if a.nrows == dim * dim:
            return compress(a, keep, dim, legs=2)
        if a.nrows == 2 * dim * dim:
            return compress(a, keep, dim, legs=2, blocks=2)
        raise ValueError(f"operator of shape {a.shape} does not act on this basis (dim {dim})")

    def vacuum(self) -> np.ndarray:
        e = np.zeros(self.dim)
        e[0] = 1.0
        return e

    def unit(self, word: Iterable[int]) -> np.ndarray:
        e = np.zeros(self.dim, dtype=np.int64)
        e[self.index[tuple(word)]] = 1
        return e


def build_basis(n: int, d: int, *, max_dim: int = DEFAULT_MAX_DIM) -> FockBasis:
    if n < 1:
        raise ValueError("n must be at least 1")
    if d < 2:
        raise ValueError("depth d must be at least 2")
    dim = sum(n**k for k in range(d + 1))
    if dim > max_dim:
        raise DimensionCapError(f"Fock dimension {dim} for n={n}, d={d} exceeds cap {max_dim}")
    words: list[Word] = [()]
    for k in range(1, d + 1):
        words.extend(itertools.product(range(1, n + 1), repeat=k))
    return FockBasis(n, d, tuple(words))


def _shift(b: FockBasis, image) -> LinOp:
    rows, cols = [], []
    for i, w in enumerate(b.words):
        if len(w) < b.d:
            rows.append(b.index[image(w)])
            cols.append(i)
    return LinOp.from_entries((b.dim, b.dim), rows, cols, np.ones(len(rows), dtype=np.int64))


def _check_letter(b: FockBasis, j: int) -> None:
    if not 1 <= j <= b.n:
        raise ValueError(f"letter {j} outside 1..{b.n}")


def left_creation(b: FockBasis, j: int) -> LinOp:
    """e_w -> e_{jw}; words already at depth d go to 0."""
    _check_letter(b, j)
    return _shift(b, lambda w: (j,) + w)


def right_creation(b: FockBasis, j: int) -> LinOp:
    """e_w -> e_{wj}; words already at depth d go to 0."""
    _check_letter(b, j)
    return _shift(b, lambda w: w + (j,))


def semicircular_x(b: FockBasis, j: int) -> LinOp:
    ell = left_creation(b, j)
    return ell + ell.T


def semicircular_y(b: FockBasis, j: int) -> LinOp:
    r = right_creation(b, j)
    return r + r.T


def level_projection(b: FockBasis, k: int) -> LinOp:
    if not 0 <= k <= b.d:
        raise ValueError(f"level {k} outside 0..{b.d}")
    diag = np.array([1 if len(w) <= k else 0 for w in b.words], dtype=np.int64)
    return LinOp.diagonal(diag)


def vacuum_projection(b: FockBasis) -> LinOp:
    return level_projection(b, 0)


def identity(b: FockBasis) -> LinOp:
    return LinOp.identity(b.dim)


def tensor_identity(b: FockBasis, a: LinOp) -> LinOp:
    """``a (x) 1`` on H (x) H."""
    return kron(a, identity(b))


@dataclass(frozen=True)
class Generators:
    """All generating operators of one basis, built once."""

    ell: tuple[LinOp, ...]
    r: tuple[LinOp, ...]
    x: tuple[LinOp, ...]
    y: tuple[LinOp, ...]


@lru_cache(maxsize=32)
def generators(b: FockBasis) -> Generators:
    ell = tuple(left_creation(b, j) for j in range(1, b.n + 1))
    r = tuple(right_creation(b, j) for j in range(1, b.n + 1))
    return Generators(
        ell=ell,
        r=r,
        x=tuple(a + a.T for a in ell),
        y=tuple(a + a.T for a in r),
    )


class NcPoly:
    """Noncommutative polynomial with integer coefficients in generators 1..n.

    Terms are kept canonical: sorted by (length, word), merged, zero-free.
    """

    __slots__ = ("terms",)

    def __init__(self, terms: Iterable[tuple[int, Sequence[int]]] = ()):
        acc: dict[Word, int] = {}
        for coeff, word in terms:
            w = tuple(int(c) for c in word)
            if any(c < 1 for c in w):
                raise ValueError(f"generator indices start at 1, got {w}")
            acc[w] = acc.get(w, 0) + int(coeff)
        self.terms: tuple[tuple[int, Word], ...] = tuple(
            (c, w) for w, c in sorted(acc.items(), key=lambda kv: (len(kv[0]), kv[0])) if c != 0
        )

    @classmethod
    def one(cls) -> NcPoly:
        return cls([(1, ())])

    @classmethod
    def gen(cls, j: int) -> NcPoly:
        return cls([(1, (j,))])

    @classmethod
    def word(cls, w: Sequence[int], coeff: int = 1) -> NcPoly:
        return cls([(coeff, w)])

    @property
    def degree(self) -> int:
        return max((len(w) for _, w in self.terms), default=0)

    @property
    def max_generator(self) -> int:
        return max((max(w) for _, w in self.terms if w), default=0)

    def __add__(self, other: NcPoly) -> NcPoly:
        return NcPoly(self.terms + other.terms)

    def __sub__(self, other: NcPoly) -> NcPoly:
        return NcPoly(self.terms + tuple((-c, w) for c, w in other.terms))

    def __mul__(self, other) -> NcPoly:
        if isinstance(other, NcPoly):
            return NcPoly((c1 * c2, w1 + w2) for c1, w1 in self.terms for c2, w2 in other.terms)
        return NcPoly((int(other) * c, w) for c, w in self.terms)

    __rmul__ = __mul__

    def __eq__(self, other) -> bool:
        return isinstance(other, NcPoly) and self.terms == other.terms

    def __hash__(self) -> int:
        return hash(self.terms)

    def __repr__(self) -> str:
        if not self.terms:
            return "NcPoly(0)"
        parts = [f"{c}*" + ("".join(f"g{j}" for j in w) or "1") for c, w in self.terms]
        return "NcPoly(" + " + ".join(parts) + ")"


def random_poly(n: int, degree: int, rng: random.Random, *, coeff_range: int = 2, density: float = 0.5) -> NcPoly:
    """Random NcPoly of degree <= ``degree`` with integer coefficients in [-coeff_range, coeff_range]."""
    terms = []
    for k in range(degree + 1):
        for w in itertools.product(range(1, n + 1), repeat=k):
            if rng.random() < density:
                terms.append((rng.randint(-coeff_range, coeff_range), w))
    return NcPoly(terms)


def eval_word(word: Sequence[int], gens: Sequence[LinOp], dim: int | None = None) -> LinOp:
    if not word:
        if dim is None:
            dim = gens[0].nrows
        return LinOp.identity(dim)
    out = gens[word[0] - 1]
    for j in word[1:]:
        out = out @ gens[j - 1]
    return out


def eval_poly(p: NcPoly, gens: Sequence[LinOp]) -> LinOp:
    """Substitute ``gens[j-1]`` for generator j."""
    if p.max_generator > len(gens):
        raise ValueError(f"polynomial uses generator {p.max_generator} but only {len(gens)} given")
    dim = gens[0].nrows
    exact = all(g.exact for g in gens)
    out = LinOp.zeros(dim, exact=exact)
    cache: dict[Word, LinOp] = {(): LinOp.identity(dim, exact=exact)}

    def power(w: Word) -> LinOp:
        if w not in cache:
            cache[w] = power(w[:-1]) @ gens[w[-1] - 1]
        return cache[w]

    for c, w in p.terms:
        out = out + power(w) * c
    return out


def vacuum_moment(word: Sequence[int], gens: Sequence[LinOp]) -> int | float:
    """<Omega, g_{w1} ... g_{wk} Omega>, computed by applying the word to the vacuum."""
    dim = gens[0].nrows
    v = np.zeros(dim, dtype=np.int64 if gens[0].exact else np.float64)
    v[0] = 1
    for j in reversed(word):
        v = gens[j - 1].apply(v)
    return v[0].item()

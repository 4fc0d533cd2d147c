"""Adversarial search for an implementing operator of small norm.

Every ``T0 + c (x) 1`` with ``c`` in the commutant of the x_j implements the
same derivation as ``T0``.  The search draws random ``c`` from the span of
short words in the y_j, refines the best draws by coordinate descent, and
reports the smallest norm found against ``sqrt(n)/4``.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .derivation import DERIVATION_MARGIN, MarginError, ampliate, canonical_T0, delta
from .fock import FockBasis, eval_word, generators
from .numkit import DEFAULT_TOL, LinOp, commutator, spectral_norm

COEFF_BITS = 20
COEFF_SCALE = 2**COEFF_BITS
GOLDEN = (math.sqrt(5) - 1) / 2
# hundreds of evaluations per search: dense eigensolves only for small operators
SEARCH_DENSE_MAX = 256
# norms are accurate to about 1e-10, so smaller sweep gains are noise
IMPROVE_RTOL = 1e-9


def max_degree(b: FockBasis) -> int:
    return max(0, b.d // 2 - 1)


def commutant_words(n: int, degree: int) -> list[tuple[int, ...]]:
    return [w for k in range(degree + 1) for w in itertools.product(range(1, n + 1), repeat=k)]


def _word_ops(b: FockBasis, degree: int) -> list[LinOp]:
    y = generators(b).y
    return [ampliate(b, eval_word(w, y, b.dim)) for w in commutant_words(b.n, degree)]


def _draw(rng: np.random.Generator, count: int) -> np.ndarray:
    """Integer numerators of dyadic coefficients in [-1, 1]."""
    return rng.integers(-COEFF_SCALE, COEFF_SCALE, size=count, endpoint=True)


def sample_commutant(b: FockBasis, degree: int, seed: int, *, exact: bool = False) -> LinOp:
    """Random combination of y-words of length <= degree, tensored with 1.

    Coefficients are dyadic rationals ``m / 2**20`` with ``|m| <= 2**20``.  In
    exact mode the operator is returned scaled by ``2**20`` so it has integer
    entries; the float version is exactly that divided by ``2**20``.
    """
    if degree > b.d / 2 - 1 and degree > 0:
        raise MarginError(f"degree {degree} exceeds d/2 - 1 = {b.d / 2 - 1}")
    nums = _draw(np.random.default_rng(seed), len(commutant_words(b.n, degree)))
    out = LinOp.zeros(b.dim * b.dim)
    for m, op in zip(nums, _word_ops(b, degree)):
        out = out + op * int(m)
    return out if exact else out * (1.0 / COEFF_SCALE)


def commutes_with_generators(b: FockBasis, c: LinOp, margin: int) -> bool:
    """Exact check that ``[c, x_i (x) 1]`` vanishes after compression to depth d - margin."""
    for xi in generators(b).x:
        if not b.compress(commutator(c, ampliate(b, xi)), b.d - margin).is_zero():
            return False
    return True


def sanity_floor(b: FockBasis, tol: float = DEFAULT_TOL) -> float:
    """max_k ||compress(delta(x_k), d-2)|| / (2 ||x_k||), a floor for any implementing T."""
    best = 0.0
    for xk in generators(b).x:
        num = spectral_norm(b.compress(delta(b, xk), b.d - DERIVATION_MARGIN).to_float(), tol).value
        best = max(best, num / (2 * spectral_norm(xk.to_float(), tol).value))
    return best


@dataclass(frozen=True)
class SearchReport:
    n: int
    d: int
    trials: int
    restarts: int
    sweeps: int
    seed: int
    degree: int
    best_value: float
    bound: float
    margin: float
    best_coefficients: tuple[float, ...]
    words: tuple[tuple[int, ...], ...]
    floor: float
    derivation_ok: bool
    evaluations: int
    unconverged: int = 0
    history: tuple[float, ...] = field(default=(), repr=False)

    def as_dict(self) -> dict:
        return {
            "n": self.n,
            "d": self.d,
            "trials": self.trials,
            "restarts": self.restarts,
            "sweeps": self.sweeps,
            "seed": self.seed,
            "degree": self.degree,
            "bestValue": self.best_value,
            "bound": self.bound,
            "margin": self.margin,
            "bestCoefficients": list(self.best_coefficients),
            "words": [list(w) for w in self.words],
            "floor": self.floor,
            "derivationOk": self.derivation_ok,
            "evaluations": self.evaluations,
            "unconverged": self.unconverged,
        }


class _Objective:
    """``c -> ||T0 + sum_w c_w W_w (x) 1||`` with evaluation bookkeeping."""

    def __init__(self, base: LinOp, ops: list[LinOp], tol: float):
        self.base = base.to_float()
        self.ops = [op.to_float() for op in ops]
        self.tol = tol
        self.count = 0
        self.unconverged = 0

    def operator(self, coeffs: np.ndarray) -> LinOp:
        out = self.base
        for c, op in zip(coeffs, self.ops):
            if c:
                out = out + op * float(c)
        return out

    def __call__(self, coeffs: np.ndarray, v0: np.ndarray | None = None) -> tuple[float, np.ndarray]:
        self.count += 1
        est, vec = spectral_norm(
            self.operator(coeffs), self.tol, v0=v0, return_vector=True, dense_max=SEARCH_DENSE_MAX
        )
        if not est.converged:
            # a stalled Rayleigh quotient underestimates the norm; never let it win
            self.unconverged += 1
            return math.inf, vec
        return est.value, vec


def _golden(f, lo: float, hi: float, iters: int) -> tuple[float, float]:
    """Golden-section minimization of a unimodal ``f`` on [lo, hi]."""
    a, b = lo, hi
    c = b - GOLDEN * (b - a)
    d = a + GOLDEN * (b - a)
    fc, fd = f(c), f(d)
    for _ in range(iters):
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - GOLDEN * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + GOLDEN * (b - a)
            fd = f(d)
    return (c, fc) if fc <= fd else (d, fd)


def minimize_norm(
    b: FockBasis,
    trials: int = 500,
    restarts: int = 3,
    seed: int = 42,
    *,
    sweeps: int = 20,
    degree: int | None = None,
    radius: float = 1.0,
    golden_iters: int = 12,
    tol: float = DEFAULT_TOL,
) -> SearchReport:
    """Minimize ``||T0 + c (x) 1||`` over the y-word commutant family.

    Stage one evaluates ``trials`` random coefficient vectors, each drawn from
    its own seed; trial 0 is always the origin.  Stage two refines the best
    ``restarts`` draws by ``sweeps`` passes of golden-section line search per
    coordinate.  The norm is convex in the coefficients, so each line search
    is over a unimodal function.  ``radius=0`` with ``sweeps=0`` evaluates
    ``||T0||`` only.
    """
    if trials < 1:
        raise ValueError("trials must be at least 1")
    degree = max_degree(b) if degree is None else degree
    words = commutant_words(b.n, degree)
    ops = _word_ops(b, degree)
    objective = _Objective(canonical_T0(b), ops, tol)
    dim = len(words)

    derivation_ok = all(commutes_with_generators(b, op, degree + DERIVATION_MARGIN) for op in ops)

    draws: list[tuple[float, int, np.ndarray]] = []
    for t in range(trials):
        if t == 0 or radius == 0:
            coeffs = np.zeros(dim)
        else:
            rng = np.random.default_rng([seed, t])
            coeffs = radius * _draw(rng, dim) / COEFF_SCALE
        value, _ = objective(coeffs)
        draws.append((value, t, coeffs))
    draws.sort(key=lambda item: (item[0], item[1]))
    history = [draws[0][0]]

    best_value, _, best_coeffs = draws[0]
    for value, _, start in draws[: max(restarts, 0)]:
        coeffs = start.copy()
        current = value
        step = max(radius, 1e-3)
        vec = None
        for _ in range(sweeps):
            before = current
            for i in range(dim):
                def line(s, i=i):
                    trial = coeffs.copy()
                    trial[i] = s
                    return objective(trial, vec)[0]

                s, fs = _golden(line, coeffs[i] - step, coeffs[i] + step, golden_iters)
                if fs < current:
                    coeffs[i], current = s, fs
            step /= 2
            if before - current <= IMPROVE_RTOL * max(current, 1.0):
                break
            _, vec = objective(coeffs)
        history.append(current)
        if current < best_value:
            best_value, best_coeffs = current, coeffs

    bound = math.sqrt(b.n) / 4
    return SearchReport(
        n=b.n,
        d=b.d,
        trials=trials,
        restarts=restarts,
        sweeps=sweeps,
        seed=seed,
        degree=degree,
        best_value=float(best_value),
        bound=bound,
        margin=float(best_value - bound),
        best_coefficients=tuple(float(c) for c in best_coeffs),
        words=tuple(words),
        floor=sanity_floor(b, tol),
        derivation_ok=derivation_ok,
        evaluations=objective.count,
        unconverged=objective.unconverged,
        history=tuple(history),
    )

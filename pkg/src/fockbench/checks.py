"""Named verification checks and their report records."""

from __future__ import annotations

import json
import math
import random
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Callable

import numpy as np

from . import derivation as dv
from . import freegroup as fg
from .fock import (
    DimensionCapError,
    FockBasis,
    NcPoly,
    build_basis,
    eval_poly,
    eval_word,
    generators,
    level_projection,
    random_poly,
    vacuum_projection,
)
from .numkit import ExactOverflowError, LinOp, commutator, exact_eq, kron, rank, spectral_norm
from .search import minimize_norm

SCHEMA_VERSION = 1
DEFAULT_TENSOR_CAP = 200_000
# norm sampling and the search run on the deepest truncation whose tensor square fits here
DEFAULT_SAMPLE_CAP = 5_000


@dataclass
class RunConfig:
    n: int = 2
    d: int = 4
    tolerance: float = 1e-9
    seed: int = 42
    checks: list[str] | str = "all"
    scalar_mode: str = "exact"
    output_path: str | None = None
    format: str = "json"
    threads: int = 1
    tensor_cap: int = DEFAULT_TENSOR_CAP
    sample_cap: int = DEFAULT_SAMPLE_CAP
    samples: int = 50
    cb_trials: int = 20
    search_trials: int = 100
    search_restarts: int = 3
    search_sweeps: int = 20

    def check_names(self) -> list[str]:
        if self.checks == "all" or self.checks == ["all"]:
            return list(CHECKS)
        return list(self.checks)

    def validate(self) -> None:
        """Raise ``ConfigError`` listing every invalid field at once."""
        problems = []
        if not isinstance(self.n, int) or self.n < 1:
            problems.append(f"n must be a positive integer (got {self.n!r})")
        if not isinstance(self.d, int) or self.d < 3:
            problems.append(f"depth must be an integer >= 3 (got {self.d!r})")
        if not (isinstance(self.tolerance, (int, float)) and self.tolerance > 0):
            problems.append(f"tol must be positive (got {self.tolerance!r})")
        if not isinstance(self.seed, int):
            problems.append(f"seed must be an integer (got {self.seed!r})")
        if self.scalar_mode not in ("exact", "float"):
            problems.append(f"mode must be 'exact' or 'float' (got {self.scalar_mode!r})")
        if self.format not in ("json", "csv"):
            problems.append(f"format must be 'json' or 'csv' (got {self.format!r})")
        if not isinstance(self.threads, int) or self.threads < 1:
            problems.append(f"threads must be a positive integer (got {self.threads!r})")
        for name in ("samples", "cb_trials", "search_trials", "search_restarts", "tensor_cap", "sample_cap"):
            value = getattr(self, name)
            if not isinstance(value, int) or value < 1:
                problems.append(f"{name} must be a positive integer (got {value!r})")
        if self.checks != "all":
            unknown = [c for c in self.checks if c not in CHECKS and c != "all"]
            if unknown:
                problems.append(f"unknown checks: {', '.join(unknown)} (known: {', '.join(CHECKS)})")
        if not problems and isinstance(self.n, int) and isinstance(self.d, int):
            dim = sum(self.n**k for k in range(self.d + 1))
            if dim * dim > self.tensor_cap:
                problems.append(
                    f"tensor-square dimension {dim * dim} for n={self.n}, d={self.d} exceeds cap {self.tensor_cap}"
                )
        if problems:
            raise ConfigError("; ".join(problems))


class ConfigError(ValueError):
    pass


@dataclass
class CheckReport:
    check_name: str
    params: dict[str, Any]
    lhs: float | str
    rhs: float | str
    values: dict[str, Any]
    passed: bool
    wall_millis: int = 0
    error: str | None = None

    def to_dict(self, *, timing: bool = True) -> dict[str, Any]:
        out = {
            "schemaVersion": SCHEMA_VERSION,
            "checkName": self.check_name,
            "params": self.params,
            "lhs": self.lhs,
            "rhs": self.rhs,
            "values": self.values,
            "pass": self.passed,
        }
        if self.error is not None:
            out["error"] = self.error
        if timing:
            out["wallMillis"] = self.wall_millis
        return out

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> CheckReport:
        return cls(
            check_name=data["checkName"],
            params=data["params"],
            lhs=data["lhs"],
            rhs=data["rhs"],
            values=data["values"],
            passed=data["pass"],
            wall_millis=data.get("wallMillis", 0),
            error=data.get("error"),
        )


def dumps_reports(reports: list[CheckReport], *, timing: bool = True) -> str:
    return json.dumps([r.to_dict(timing=timing) for r in reports], indent=2) + "\n"


def loads_reports(text: str) -> list[CheckReport]:
    return [CheckReport.from_dict(item) for item in json.loads(text)]


@dataclass
class Outcome:
    """What a check function hands back; the runner wraps it into a CheckReport."""

    values: dict[str, Any]
    passed: bool
    lhs: float | str = "exact"
    rhs: float | str = "exact"
    margin: int | None = None
    extra_params: dict[str, Any] = field(default_factory=dict)


class Context:
    def __init__(self, cfg: RunConfig):
        self.cfg = cfg
        self.b: FockBasis = build_basis(cfg.n, cfg.d, max_dim=cfg.tensor_cap)
        self.tol = cfg.tolerance
        self.exact = cfg.scalar_mode == "exact"

    def same(self, a: LinOp, b: LinOp) -> bool:
        """Equality in the configured scalar mode."""
        if self.exact:
            return exact_eq(a, b)
        diff = a.to_float() - b.to_float()
        return diff.max_abs() <= self.tol

    def op(self, a: LinOp) -> LinOp:
        return a if self.exact else a.to_float()

    def rng(self, name: str) -> random.Random:
        return random.Random(f"{name}:{self.cfg.seed}")

    def sample_basis(self) -> FockBasis:
        """Deepest truncation (at least 3) whose tensor square fits the sampling cap."""
        depth = self.cfg.d
        while depth > 3 and sum(self.cfg.n**k for k in range(depth + 1)) ** 2 > self.cfg.sample_cap:
            depth -= 1
        return self.b if depth == self.cfg.d else build_basis(self.cfg.n, depth)


def _as_float(x) -> float:
    return float(x)


# checks -------------------------------------------------------------------


def check_commutator_table(ctx: Context) -> Outcome:
    b = ctx.b
    g = generators(b)
    depth = b.d - 1
    p0 = b.compress(vacuum_projection(b), depth)
    zero = LinOp.zeros(p0.nrows)
    vanish = True
    signs = set()
    for k in range(b.n):
        for j in range(b.n):
            ell, r = ctx.op(g.ell[k]), ctx.op(g.r[j])
            vanish &= ctx.same(b.compress(commutator(ell, r), depth), zero)
            vanish &= ctx.same(b.compress(commutator(ell.T, r.T), depth), zero)
            mixed = b.compress(commutator(ell, r.T), depth)
            if k != j:
                vanish &= ctx.same(mixed, zero)
            else:
                if ctx.same(mixed, p0):
                    signs.add(1)
                elif ctx.same(mixed, -p0):
                    signs.add(-1)
                else:
                    signs.add(0)
    sign = signs.pop() if len(signs) == 1 else 0
    return Outcome(
        values={"pairs": b.n * b.n, "vanishingHolds": bool(vanish), "vacuumSign": sign, "positiveSignHolds": sign == 1},
        passed=bool(vanish and sign == -1),
        margin=1,
    )


def check_delta_generator(ctx: Context) -> Outcome:
    b = ctx.b
    depth = b.d - dv.DERIVATION_MARGIN
    x = generators(b).x
    ok_neg = ok_pos = ok_rewrite = True
    for k in range(1, b.n + 1):
        dk = b.compress(dv.delta(b, ctx.op(x[k - 1])), depth)
        ok_neg &= ctx.same(dk, b.compress(dv.delta_generator_target(b, k, -1), depth))
        ok_pos &= ctx.same(dk, b.compress(dv.delta_generator_target(b, k, +1), depth))
        ok_rewrite &= ctx.same(dk, b.compress(dv.delta_via_right_adjoints(b, ctx.op(x[k - 1])), depth))
    return Outcome(
        values={
            "generators": b.n,
            "equalsMinusVacuumTensorX": bool(ok_neg),
            "equalsPlusVacuumTensorX": bool(ok_pos),
            "rewriteHolds": bool(ok_rewrite),
        },
        passed=bool(ok_neg and ok_rewrite),
        margin=dv.DERIVATION_MARGIN,
    )


def check_s_norm(ctx: Context) -> Outcome:
    b = ctx.b
    g = generators(b)
    S = dv.build_S(b)
    est = spectral_norm(S.to_float(), 1e-10)
    antisym = exact_eq(S.T, -S)
    nonempty = LinOp.identity(b.dim) - vacuum_projection(b)
    sum_ll = sum_rr = LinOp.zeros(b.dim)
    for ell, r in zip(g.ell, g.r):
        sum_ll = sum_ll + ell @ ell.T
        sum_rr = sum_rr + r @ r.T
    diag_ok = exact_eq(sum_ll, nonempty) and exact_eq(sum_rr, nonempty)
    bound = 2 + ctx.tol
    return Outcome(
        values={
            "normS": est.value,
            "residual": est.residual,
            "method": est.method,
            "converged": est.converged,
            "antisymmetric": antisym,
            "sumLLtIsNonemptyProjection": diag_ok,
            "normSumLLt": 1 if diag_ok else spectral_norm(sum_ll.to_float()).value,
            "innerDerivationBound": 2 * est.value,
        },
        passed=bool(est.value <= bound and antisym and diag_ok and est.converged),
        lhs=est.value,
        rhs=bound,
    )


def check_chain_t0(ctx: Context) -> Outcome:
    b = ctx.b
    T0 = dv.canonical_T0(b)
    rep = dv.chain_eval(b, T0, ctx.tol)
    g = generators(b)
    z = dv.z_coefficients(b, T0)
    z_ok = all(exact_eq(zj, r.T) for zj, r in zip(z, g.r))
    rows = cols = LinOp.zeros(b.dim)
    for zj in z:
        rows = rows + zj @ zj.T
        cols = cols + zj.T @ zj
    rows_ok = exact_eq(rows, level_projection(b, b.d - 1) * b.n)
    cols_ok = exact_eq(cols, LinOp.identity(b.dim) - vacuum_projection(b))
    bounds = dv.similarity_bound(rep) if rep.all_hold else None
    values = rep.as_dict()
    values.update(
        {
            "zEqualsRightAdjoints": z_ok,
            "rowSumIsNTimesProjection": rows_ok,
            "colSumIsNonemptyProjection": cols_ok,
            "liftingNormSqBound": bounds.lifting_norm_sq if bounds else None,
            "conditionNumberBound": bounds.condition_number if bounds else None,
        }
    )
    values.pop("n")
    values.pop("d")
    return Outcome(
        values=values,
        passed=bool(rep.all_hold and z_ok and rows_ok and cols_ok and rep.derivation_residual == 0),
        lhs=rep.sqrt_n,
        rhs=4 * rep.t_norm,
    )


def _pair_degree(ctx: Context) -> int:
    return max(0, (ctx.b.d - dv.DERIVATION_MARGIN) // 2)


def _random_pairs(ctx: Context, name: str) -> list[tuple[NcPoly, NcPoly]]:
    rng = ctx.rng(name)
    deg = min(2, _pair_degree(ctx))
    return [
        (random_poly(ctx.b.n, deg, rng), random_poly(ctx.b.n, deg, rng)) for _ in range(ctx.cfg.samples)
    ]


def check_leibniz(ctx: Context) -> Outcome:
    pairs = _random_pairs(ctx, "leibniz")
    failures = sum(not dv.leibniz_check(ctx.b, p, q) for p, q in pairs)
    return Outcome(values={"pairs": len(pairs), "failures": failures}, passed=failures == 0)


def check_u_mult(ctx: Context) -> Outcome:
    pairs = _random_pairs(ctx, "u-mult")
    failures = sum(not dv.u_multiplicative(ctx.b, p, q) for p, q in pairs)
    return Outcome(values={"pairs": len(pairs), "failures": failures}, passed=failures == 0)


def u_norm_sample(b: FockBasis, count: int, rng: random.Random, degree: int = 3) -> tuple[float, float]:
    """Largest ``||u(p)|| / ||pi(p)||`` and ``||u(p)|| - 3||pi(p)||`` over random p."""
    excess, ratio = -math.inf, 0.0
    for _ in range(count):
        p = random_poly(b.n, degree, rng)
        if not p.terms:
            continue
        nu = spectral_norm(dv.build_u(b, p).to_float(), 1e-10, dense_max=dv.SAMPLE_DENSE_MAX).value
        npi = spectral_norm(eval_poly(p, generators(b).x).to_float(), 1e-10, dense_max=dv.SAMPLE_DENSE_MAX).value
        if npi == 0:
            continue
        excess = max(excess, nu - 3 * npi)
        ratio = max(ratio, nu / npi)
    return ratio, excess


def check_u_norm_sample(ctx: Context) -> Outcome:
    b = ctx.sample_basis()
    count = min(ctx.cfg.samples, 100)
    ratio, excess = u_norm_sample(b, count, ctx.rng("u-norm"), min(3, b.d - dv.DERIVATION_MARGIN))
    return Outcome(
        values={"samples": count, "maxRatio": ratio, "maxExcess": excess},
        passed=bool(excess <= ctx.tol),
        lhs=ratio,
        rhs=3.0,
        extra_params={"sampleDepth": b.d},
    )


def check_cb_delta_sample(ctx: Context) -> Outcome:
    b = ctx.sample_basis()
    deg = min(3, b.d - dv.DERIVATION_MARGIN)
    trials = ctx.cfg.cb_trials
    kd = 1
    ku = 2
    r_delta = dv.cb_lower_sample(b, "delta", kd, trials, ctx.cfg.seed, degree=deg)
    r_u = dv.cb_lower_sample(b, "u", ku, trials, ctx.cfg.seed, degree=deg)
    return Outcome(
        values={"trials": trials, "deltaLevel": kd, "deltaRatio": r_delta, "uLevel": ku, "uRatio": r_u},
        passed=bool(r_delta <= 2 + 0.05 and r_u <= 3 + 0.05),
        lhs=r_delta,
        rhs=2.05,
        extra_params={"sampleDepth": b.d},
    )


def check_generation_rank(ctx: Context) -> Outcome:
    b = ctx.b
    level = min(2, b.d // 2)
    got = dv.generation_rank(b, level, level)
    want = b.level_dim(level) ** 2
    return Outcome(
        values={"wordLen": level, "rank": got, "fullAlgebraDim": want},
        passed=got == want,
        lhs=float(got),
        rhs=float(want),
        margin=level,
    )


def trace_identity(b: FockBasis, word) -> tuple[bool, bool]:
    """Vacuum moment and vector norm of a y-word agree with those of its reversal."""
    if len(word) > b.d:
        raise dv.MarginError(f"word of length {len(word)} exceeds depth {b.d}")
    y = generators(b).y
    w = eval_word(word, y, b.dim)
    wr = eval_word(tuple(reversed(word)), y, b.dim)
    assert exact_eq(wr, w.T)
    col, colr = w.mat[:, 0].toarray().ravel(), wr.mat[:, 0].toarray().ravel()
    moment = int(col[0]) == int(colr[0])
    norms = int(col @ col) == int(colr @ colr)
    return moment, norms


def check_trace_identity(ctx: Context) -> Outcome:
    b = ctx.b
    rng = ctx.rng("trace")
    words = [tuple(rng.randint(1, b.n) for _ in range(rng.randint(1, b.d))) for _ in range(100)]
    results = [trace_identity(b, w) for w in words]
    return Outcome(
        values={
            "words": len(words),
            "momentFailures": sum(not m for m, _ in results),
            "normFailures": sum(not nn for _, nn in results),
        },
        passed=all(m and nn for m, nn in results),
    )


def _fg_depth(ctx: Context, tensor: bool) -> int:
    cap = ctx.cfg.tensor_cap
    depth = ctx.cfg.d
    while depth > 2:
        count = fg.word_count(ctx.cfg.n, depth)
        if (count * count if tensor else count) <= cap:
            break
        depth -= 1
    return depth


def check_freegroup_split(ctx: Context) -> Outcome:
    n = ctx.cfg.n
    depth = _fg_depth(ctx, tensor=False)
    b = fg.build_fg_basis(n, depth, max_dim=ctx.cfg.tensor_cap)
    counts_ok = all(
        len(fg.build_fg_basis(m, k).words) == fg.word_count(m, k) for m in range(1, n + 1) for k in range(1, depth + 1)
    )
    split_ok = all(
        exact_eq(a + c, fg.right_regular(b, j)) for j in range(1, n + 1) for a, c in [fg.haagerup_split(b, j)]
    )
    flags = fg.quadratic_sums(b).flags()
    commute_ok = all(
        b.compress(commutator(fg.left_regular(b, i), fg.right_regular(b, j)), depth - 1).is_zero()
        for i in fg.letters(n)
        for j in fg.letters(n)
    )
    return Outcome(
        values={
            "fgDepth": depth,
            "wordCountsMatch": counts_ok,
            "splitSumsToRho": split_ok,
            "aaTContractive": flags["a_aT"],
            "bTbContractive": flags["bT_b"],
            "aTaContractive": flags["aT_a"],
            "bbTContractive": flags["b_bT"],
            "lambdaRhoCommute": commute_ok,
        },
        passed=bool(counts_ok and split_ok and flags["a_aT"] and flags["bT_b"] and commute_ok),
        margin=1,
        extra_params={"fgDepth": depth},
    )


def check_freegroup_delta(ctx: Context) -> Outcome:
    n = ctx.cfg.n
    depth = _fg_depth(ctx, tensor=True)
    b = fg.build_fg_basis(n, depth)
    keep = depth - dv.DERIVATION_MARGIN
    ranks, supports = [], []
    norm_ok = True
    implementing = spectral_norm(fg.implementing_operator(b).to_float(), 1e-10).value
    for k in range(1, n + 1):
        lam = fg.left_regular(b, k)
        dk = fg.delta_G(b, lam)
        comp = b.compress(dk, keep)
        ranks.append(rank(comp))
        supports.append(fg.first_leg_support(b, comp))
        norm_ok &= spectral_norm(dk.to_float(), 1e-10).value <= 2 * implementing + ctx.tol
    rng = ctx.rng("fg-leibniz")
    impl = fg.implementing_operator(b)
    fails = 0
    trials = min(ctx.cfg.samples, 100)
    for _ in range(trials):
        u = fg.eval_lambda_word(b, fg.random_lambda_word(n, rng.randint(0, 3), rng))
        v = fg.eval_lambda_word(b, fg.random_lambda_word(n, rng.randint(0, 3), rng))
        lhs = fg.delta_G(b, u @ v)
        rhs = fg.delta_G(b, u) @ kron(v, LinOp.identity(b.dim)) + kron(u, LinOp.identity(b.dim)) @ fg.delta_G(b, v)
        inner = commutator(kron(u, LinOp.identity(b.dim)), impl)
        if not (exact_eq(b.compress(lhs, keep), b.compress(rhs, keep)) and exact_eq(fg.delta_G(b, u), inner)):
            fails += 1
    return Outcome(
        values={
            "fgDepth": depth,
            "ranks": ranks,
            "firstLegSupport": max(supports),
            "implementingNorm": implementing,
            "normBoundHolds": bool(norm_ok),
            "leibnizTrials": trials,
            "leibnizFailures": fails,
        },
        passed=bool(max(supports) <= 1 and norm_ok and fails == 0),
        margin=dv.DERIVATION_MARGIN,
        extra_params={"fgDepth": depth},
    )


def check_search_min(ctx: Context) -> Outcome:
    cfg = ctx.cfg
    b = ctx.sample_basis()
    rep = minimize_norm(b, cfg.search_trials, cfg.search_restarts, cfg.seed, sweeps=cfg.search_sweeps)
    values = rep.as_dict()
    for key in ("n", "d", "seed"):
        values.pop(key)
    ok = rep.best_value >= rep.bound - ctx.tol and rep.best_value >= rep.floor - ctx.tol and rep.derivation_ok
    return Outcome(
        values=values, passed=bool(ok), lhs=rep.bound, rhs=rep.best_value, extra_params={"sampleDepth": b.d}
    )


CHECKS: dict[str, Callable[[Context], Outcome]] = {
    "commutator-table": check_commutator_table,
    "delta-generator": check_delta_generator,
    "s-norm": check_s_norm,
    "chain-t0": check_chain_t0,
    "leibniz": check_leibniz,
    "u-mult": check_u_mult,
    "u-norm-sample": check_u_norm_sample,
    "cb-delta-sample": check_cb_delta_sample,
    "generation-rank": check_generation_rank,
    "trace-identity": check_trace_identity,
    "freegroup-split": check_freegroup_split,
    "freegroup-delta": check_freegroup_delta,
    "search-min": check_search_min,
}


def run_check(name: str, ctx: Context) -> CheckReport:
    cfg = ctx.cfg
    params: dict[str, Any] = {"n": cfg.n, "d": cfg.d, "margin": None, "tol": cfg.tolerance, "seed": cfg.seed}
    start = time.perf_counter()
    try:
        out = CHECKS[name](ctx)
    except (ExactOverflowError, DimensionCapError, dv.MarginError) as err:
        return CheckReport(
            name, params, "exact", "exact", {}, False, int((time.perf_counter() - start) * 1000), str(err)
        )
    params["margin"] = out.margin
    params.update(out.extra_params)
    return CheckReport(
        check_name=name,
        params=params,
        lhs=out.lhs,
        rhs=out.rhs,
        values=_jsonable(out.values),
        passed=bool(out.passed),
        wall_millis=int((time.perf_counter() - start) * 1000),
    )


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        return float(obj) if math.isfinite(obj) else str(float(obj))
    return obj


def run_checks(cfg: RunConfig) -> list[CheckReport]:
    """Run the configured checks; reports come back in declaration order."""
    cfg.validate()
    ctx = Context(cfg)
    names = cfg.check_names()
    if cfg.threads == 1:
        return [run_check(name, ctx) for name in names]
    with ThreadPoolExecutor(max_workers=cfg.threads) as pool:
        return list(pool.map(lambda name: run_check(name, ctx), names))

"""Command-line front end: ``fockbench {check,scan,search,basis}``."""

from __future__ import annotations

import argparse
import csv
import dataclasses
import io
import json
import math
import sys
from typing import Any, Sequence

import yaml

from . import derivation as dv
from . import freegroup as fg
from .checks import CHECKS, ConfigError, Context, RunConfig, dumps_reports, run_checks
from .fock import build_basis
from .numkit import spectral_norm
from .search import minimize_norm

EXIT_OK, EXIT_FAIL, EXIT_CONFIG = 0, 1, 2

SCAN_COLUMNS = (
    "n", "d", "normS", "normT0", "rowNorm", "colNorm", "t1Norm",
    "sumOfRoots", "sqrtN", "searchMin", "bound", "condBound", "pass",
)  # fmt: skip

# config-file keys (both spellings) -> RunConfig field
_KEY_ALIASES = {
    "depth": "d",
    "tol": "tolerance",
    "scalarMode": "scalar_mode",
    "mode": "scalar_mode",
    "outputPath": "output_path",
    "out": "output_path",
    "tensorCap": "tensor_cap",
    "sampleCap": "sample_cap",
    "cbTrials": "cb_trials",
    "searchTrials": "search_trials",
    "searchRestarts": "search_restarts",
    "searchSweeps": "search_sweeps",
}
_FIELDS = {f.name for f in dataclasses.fields(RunConfig)}


def load_config_file(path: str) -> dict[str, Any]:
    try:
        with open(path) as fh:
            data = yaml.safe_load(fh) or {}
    except (OSError, yaml.YAMLError) as err:
        raise ConfigError(f"cannot read config {path}: {err}") from err
    if not isinstance(data, dict):
        raise ConfigError(f"config {path} must be a flat key/value mapping")
    out, unknown = {}, []
    for key, value in data.items():
        name = _KEY_ALIASES.get(key, key)
        if name not in _FIELDS:
            unknown.append(str(key))
        elif isinstance(value, (dict, list)) and name != "checks":
            unknown.append(f"{key} (nested values are not allowed)")
        else:
            out[name] = value
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
    return out


def _parse_range(text: str) -> range:
    """``"3"`` or ``"2..5"`` (inclusive)."""
    try:
        if ".." in text:
            lo, hi = text.split("..", 1)
            return range(int(lo), int(hi) + 1)
        value = int(text)
        return range(value, value + 1)
    except ValueError as err:
        raise ConfigError(f"bad range {text!r}; expected N or A..B") from err


def _split_checks(text: str) -> list[str] | str:
    names = [c.strip() for c in text.split(",") if c.strip()]
    return "all" if names == ["all"] else names


def build_config(args: argparse.Namespace, *, ranges: bool = False) -> RunConfig:
    values: dict[str, Any] = load_config_file(args.config) if args.config else {}
    flags = {
        "tolerance": args.tol,
        "seed": args.seed,
        "scalar_mode": args.mode,
        "output_path": args.out,
        "format": args.format,
        "threads": args.threads,
        "tensor_cap": args.tensor_cap,
        "search_trials": getattr(args, "trials", None),
        "search_restarts": getattr(args, "restarts", None),
    }
    if not ranges:
        flags["n"] = args.n
        flags["d"] = args.depth
    if getattr(args, "checks", None) is not None:
        flags["checks"] = _split_checks(args.checks)
    values.update({k: v for k, v in flags.items() if v is not None})
    if isinstance(values.get("checks"), str):
        values["checks"] = _split_checks(values["checks"])
    if ranges:
        values.setdefault("format", "csv")
    try:
        return RunConfig(**values)
    except TypeError as err:
        raise ConfigError(str(err)) from err


def _emit(text: str, path: str | None) -> None:
    if path:
        with open(path, "w", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _finite(x: float) -> float | str:
    return x if math.isfinite(x) else str(x)


# subcommands ---------------------------------------------------------------


def cmd_check(args: argparse.Namespace) -> int:
    cfg = build_config(args)
    reports = run_checks(cfg)
    if cfg.format == "csv":
        text = format_reports_csv(reports)
    else:
        text = dumps_reports(reports, timing=not args.no_timing)
    _emit(text, cfg.output_path)
    for r in reports:
        status = "PASS" if r.passed else "FAIL"
        print(f"{status} {r.check_name} ({r.wall_millis} ms)", file=sys.stderr)
    return EXIT_OK if all(r.passed for r in reports) else EXIT_FAIL


def format_reports_csv(reports) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["checkName", "pass", "lhs", "rhs", "margin", "wallMillis"])
    for r in reports:
        writer.writerow([r.check_name, r.passed, r.lhs, r.rhs, r.params.get("margin"), r.wall_millis])
    return buf.getvalue()


def scan_row(cfg: RunConfig) -> dict[str, Any]:
    """One scan row: norms of S and T0, the chain on T0, and a search minimum."""
    ctx = Context(cfg)
    b = ctx.b
    norm_s = spectral_norm(dv.build_S(b).to_float(), 1e-10).value
    rep = dv.chain_eval(b, dv.canonical_T0(b), cfg.tolerance)
    search = minimize_norm(ctx.sample_basis(), cfg.search_trials, cfg.search_restarts, cfg.seed, sweeps=cfg.search_sweeps)
    bound = math.sqrt(cfg.n) / 4
    passed = rep.all_hold and search.best_value >= bound - cfg.tolerance and norm_s <= 2 + cfg.tolerance
    return {
        "n": cfg.n,
        "d": cfg.d,
        "normS": norm_s,
        "normT0": rep.t_norm,
        "rowNorm": rep.row_norm,
        "colNorm": rep.col_norm,
        "t1Norm": rep.t1_norm,
        "sumOfRoots": rep.sum_of_roots,
        "sqrtN": rep.sqrt_n,
        "searchMin": search.best_value,
        "bound": bound,
        "condBound": cfg.n**0.25 / 2,
        "pass": bool(passed),
    }


def scan(cfg: RunConfig, n_range: Sequence[int], d_range: Sequence[int]) -> list[dict[str, Any]]:
    grid = [(n, d) for n in n_range for d in d_range]
    if not grid:
        raise ConfigError("empty scan grid")
    problems = []
    for n, d in grid:
        try:
            dataclasses.replace(cfg, n=n, d=d, checks="all").validate()
        except ConfigError as err:
            problems.append(f"(n={n}, d={d}): {err}")
    if problems:
        raise ConfigError("; ".join(problems))
    return [scan_row(dataclasses.replace(cfg, n=n, d=d)) for n, d in grid]


def format_csv(rows: list[dict[str, Any]]) -> str:
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=SCAN_COLUMNS, lineterminator="\n")
    writer.writeheader()
    for row in rows:
        writer.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in row.items()})
    return buf.getvalue()


def cmd_scan(args: argparse.Namespace) -> int:
    cfg = build_config(args, ranges=True)
    rows = scan(cfg, _parse_range(args.n), _parse_range(args.depth))
    if cfg.format == "json":
        text = json.dumps(rows, indent=2) + "\n"
    else:
        text = format_csv(rows)
    _emit(text, cfg.output_path)
    return EXIT_OK if all(r["pass"] for r in rows) else EXIT_FAIL


def cmd_search(args: argparse.Namespace) -> int:
    cfg = build_config(args)
    cfg.validate()
    b = build_basis(cfg.n, cfg.d)
    rep = minimize_norm(b, cfg.search_trials, cfg.search_restarts, cfg.seed, sweeps=cfg.search_sweeps, tol=1e-10)
    out = rep.as_dict()
    out["history"] = [_finite(h) for h in rep.history]
    out["conditionNumberBound"] = cfg.n**0.25 / 2
    _emit(json.dumps(out, indent=2) + "\n", cfg.output_path)
    return EXIT_OK if rep.best_value >= rep.bound - cfg.tolerance else EXIT_FAIL


def cmd_basis(args: argparse.Namespace) -> int:
    cfg = build_config(args)
    if args.group == "free":
        if cfg.n < 1 or cfg.d < 1:
            raise ConfigError("n and depth must be positive")
        b = fg.build_fg_basis(cfg.n, cfg.d)
    else:
        if cfg.n < 1 or cfg.d < 2:
            raise ConfigError("need n >= 1 and depth >= 2")
        b = build_basis(cfg.n, cfg.d)
    out = {"group": args.group, "n": b.n, "d": b.d, "dim": b.dim, "words": [list(w) for w in b.words]}
    _emit(json.dumps(out) + "\n", cfg.output_path)
    return EXIT_OK


def make_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="flat YAML key/value file; flags override it")
    common.add_argument("--tol", type=float)
    common.add_argument("--seed", type=int)
    common.add_argument("--mode", choices=("exact", "float"), help="scalar mode for identity checks")
    common.add_argument("--out", help="write the report here instead of stdout")
    common.add_argument("--format", choices=("json", "csv"))
    common.add_argument("--threads", type=int)
    common.add_argument("--tensor-cap", type=int, dest="tensor_cap", help="largest tensor-square dimension allowed")

    single = argparse.ArgumentParser(add_help=False)
    single.add_argument("--n", type=int, help="number of generators")
    single.add_argument("--depth", type=int, help="truncation depth")

    parser = argparse.ArgumentParser(prog="fockbench", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("check", parents=[common, single], help="run named verification checks")
    p.add_argument("--checks", help=f"comma-separated names or 'all' ({', '.join(CHECKS)})")
    p.add_argument("--no-timing", action="store_true", help="omit wallMillis for byte-stable output")
    p.set_defaults(func=cmd_check)

    p = sub.add_parser("scan", parents=[common], help="tabulate norms and bounds over a grid")
    p.add_argument("--n", default="1..4", help="N or A..B")
    p.add_argument("--depth", default="3..4", help="D or A..B")
    p.add_argument("--trials", type=int, help="search trials per row")
    p.add_argument("--restarts", type=int)
    p.set_defaults(func=cmd_scan)

    p = sub.add_parser("search", parents=[common, single], help="minimize the implementing-operator norm")
    p.add_argument("--trials", type=int)
    p.add_argument("--restarts", type=int)
    p.set_defaults(func=cmd_search)

    p = sub.add_parser("basis", parents=[common, single], help="list basis words")
    p.add_argument("--group", choices=("fock", "free"), default="fock")
    p.set_defaults(func=cmd_basis)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = make_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as err:
        print(f"configuration error: {err}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())

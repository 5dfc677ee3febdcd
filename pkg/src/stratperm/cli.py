"""Command-line interface: ``stratperm <command> [options]``.

Every command writes one JSON report (to ``--out`` or stdout). Exit status is
0 on success, 1 on input errors and 2 when an oracle check fails. Options may
also come from a JSON file given by ``--config``; flags on the command line
take precedence.
"""
from __future__ import annotations

import argparse
import json
import math
import sys
import warnings

import numpy as np

from . import __version__
from .bounds import RATE_METHODS, kolmogorov_from_wasserstein, rate, wasserstein_bound
from .core import StratifiedMatrix, StratumLayout, moments
from .designs import (build_design_matrix, design_variance, estimate, rate_design,
                      simulate_post_stratified)
from .errors import BudgetExceeded, StratPermError
from .formats import read_design, read_matrix, read_poststrat, read_test_data
from .inference import ALTERNATIVES, METHODS, iv_confidence_interval, iv_test, permutation_test
from .montecarlo import (default_workers, ecdf_kolmogorov_vs_normal, empirical_wasserstein_vs_normal,
                         simulate_statistic)
from .oracle import (DEFAULT_BUDGET, enumerate_distribution, exact_distance, verify_pi_dagger,
                     verify_stein_pair, verify_zero_bias)
from .rng import DEFAULT_SEED, RandomSource

SCHEMA_VERSION = 1
EXIT_OK, EXIT_INPUT, EXIT_VERIFY = 0, 1, 2
FAMILIES = ("normal", "uniform", "exponential", "t5")


def _clean(obj):
    """Make a report JSON-safe: numpy scalars to Python, non-finite floats to strings."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return x if math.isfinite(x) else repr(x)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def _emit(report: dict, args) -> str:
    text = json.dumps(_clean({"schema_version": SCHEMA_VERSION, "command": args.command, **report}),
                      sort_keys=True, indent=2) + "\n"
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return text


def _source(args) -> RandomSource:
    return RandomSource(args.seed)


def _workers(args) -> int:
    return args.workers if args.workers else default_workers()


def _bound_reports(A: StratifiedMatrix) -> dict:
    out = {}
    for method in RATE_METHODS:
        try:
            out[method] = rate(A, method).to_dict()
        except StratPermError as exc:
            out[method] = {"error": type(exc).__name__, "message": str(exc)}
    out["wasserstein"] = wasserstein_bound(A).to_dict()
    return out


# ---------------------------------------------------------------- commands

def cmd_bound(args) -> int:
    if args.input.lower().endswith(".csv"):
        d, _, _ = read_design(args.input)
        A = build_design_matrix(d)
        reports = _bound_reports(A)
        reports["design"] = rate_design(d).to_dict()
    else:
        A = read_matrix(args.input)
        reports = _bound_reports(A)
    if args.method and args.method != "all":
        reports = {args.method: reports[args.method]}
    _emit({"moments": moments(A).to_dict(), "bounds": reports}, args)
    return EXIT_OK


def cmd_simulate(args) -> int:
    A = read_matrix(args.input)
    s = simulate_statistic(A, args.reps, _source(args), _workers(args))
    d_k = ecdf_kolmogorov_vs_normal(s)
    d_w = empirical_wasserstein_vs_normal(s)
    wb = wasserstein_bound(A)
    if args.dump:
        s.to_csv(args.dump)
    _emit({
        "seed": args.seed, "reps": args.reps,
        "summary": s.to_dict(),
        "kolmogorov": d_k,
        "wasserstein": d_w,
        "kolmogorov_via_wasserstein": kolmogorov_from_wasserstein(d_w),
        "wasserstein_bound": wb.to_dict(),
        "within_wasserstein_bound": bool(d_w <= wb.certified_bound),
        "theorem1": rate(A, "theorem1").to_dict(),
    }, args)
    return EXIT_OK


def cmd_oracle(args) -> int:
    A = read_matrix(args.input)
    budget = args.budget
    reports = []
    dist = enumerate_distribution(A, budget)
    mr = moments(A)
    gap = max(abs(dist.mean() - mr.mean), abs(dist.variance() - mr.variance))
    reports.append({"identity": "moments", "max_violation": gap, "budget_used": int(dist.counts.sum()),
                    "pass": gap <= args.tolerance})
    if mr.variance > 0:
        std = dist.standardized()
        exact = {"kolmogorov": exact_distance(std, "kolmogorov"), "wasserstein": exact_distance(std, "wasserstein")}
        wb = wasserstein_bound(A)
        reports.append({"identity": "wasserstein_bound", "max_violation": max(0.0, exact["wasserstein"] - wb.certified_bound),
                        "budget_used": int(dist.counts.sum()), "pass": exact["wasserstein"] <= wb.certified_bound,
                        "exact": exact, "certified_bound": wb.certified_bound})
    if A.layout.n > A.layout.K:
        reports.append(verify_stein_pair(A, budget, args.tolerance).to_dict())
    if mr.variance > 0:
        for deg in (1, 2, 3):
            reports.append(verify_zero_bias(A, deg, budget, max(args.tolerance, 1e-8)).to_dict())
    reports.append(verify_pi_dagger(A, budget).to_dict())
    ok = all(r["pass"] for r in reports)
    _emit({"reports": reports, "pass": ok}, args)
    return EXIT_OK if ok else EXIT_VERIFY


def cmd_design(args) -> int:
    d, z, table = read_design(args.input)
    A = build_design_matrix(d)
    out = {
        "kind": d.kind,
        "strata": [str(x) for x in table.labels],
        "sizes": list(d.layout.sizes),
        "counts": list(d.sample_sizes),
        "weights": list(d.weights),
        "target": d.target,
        "variance": design_variance(d),
        "matrix_variance": moments(A).variance,
        "matrix": A.to_dict(),
    }
    try:
        out["rate"] = rate_design(d).to_dict()
    except StratPermError as exc:
        out["rate"] = {"error": type(exc).__name__, "message": str(exc)}
    if z is not None:
        out["estimate"] = estimate(d, z)
    _emit(out, args)
    return EXIT_OK


def cmd_poststrat(args) -> int:
    if args.n1 is None:
        raise StratPermError("poststrat needs --n1")
    spec, pop, _ = read_poststrat(args.input, args.n1)
    rep = simulate_post_stratified(spec, pop, args.reps, _source(args), _workers(args))
    _emit({"seed": args.seed, "reps": args.reps, "report": rep.to_dict()}, args)
    return EXIT_OK


def _grid(text: str) -> np.ndarray:
    """``start:stop:num`` or a comma-separated list."""
    if ":" in text:
        a, b, m = text.split(":")
        return np.linspace(float(a), float(b), int(m))
    return np.array(sorted(float(x) for x in text.split(",")))


def cmd_test(args) -> int:
    table = read_test_data(args.input)
    z, y = table.columns["z"], table.columns["y"]
    d = table.columns.get("d", z)
    common = dict(method=args.method, reps=args.reps, rng=_source(args), budget=args.budget,
                  workers=_workers(args))
    if args.invert:
        if not args.grid:
            raise StratPermError("--invert needs --grid")
        cs = iv_confidence_interval(y, d, z, table.layout, args.alpha, _grid(args.grid), **common)
        _emit({"seed": args.seed, "interval": cs.to_dict()}, args)
        return EXIT_OK
    res = iv_test(y, d, z, table.layout, args.beta0, args.alternative, **common)
    _emit({"seed": args.seed, "beta0": args.beta0, "result": res.to_dict()}, args)
    return EXIT_OK


def _family_matrix(family: str, n: int, K: int, rng: RandomSource) -> StratifiedMatrix:
    if n % K:
        raise StratPermError(f"n={n} is not divisible by K={K}")
    g = rng.generator
    s = n // K
    blocks = []
    for _ in range(K):
        if family == "normal":
            b = g.standard_normal((s, s))
        elif family == "uniform":
            b = g.random((s, s))
        elif family == "exponential":
            b = g.exponential(size=(s, s))
        else:
            b = g.standard_t(5, size=(s, s))
        blocks.append(b)
    return StratifiedMatrix(StratumLayout((s,) * K), tuple(blocks))


def scaling_table(family, ks, ns, reps, seed, workers) -> list[dict]:
    """Rate quantity and Monte Carlo Kolmogorov distance over a grid of (K, n)."""
    root = RandomSource(seed)
    streams = root.spawn(len(ks) * len(ns))
    rows = []
    for idx, (K, n) in enumerate((K, n) for K in ks for n in ns):
        mat_rng, sim_rng = streams[idx].spawn(2)
        A = _family_matrix(family, n, K, mat_rng)
        rep = rate(A, "theorem1")
        s = simulate_statistic(A, reps, sim_rng, workers)
        d_k = ecdf_kolmogorov_vs_normal(s)
        rows.append({
            "K": K, "n": n, "rate_quantity": rep.rate_quantity, "theta": rep.theta,
            "regime": rep.regime, "delta": rep.exponent_delta,
            "rate_power": rep.rate_quantity ** rep.exponent_delta,
            "d_K": d_k, "d_K_scaled": d_k * n ** rep.exponent_delta,
            "d_K_sqrt_n": d_k * math.sqrt(n),
        })
    return rows


def cmd_scaling(args) -> int:
    ks = [int(x) for x in str(args.K).split(",")]
    ns = [int(x) for x in str(args.n).split(",")]
    rows = scaling_table(args.family, ks, ns, args.reps, args.seed, _workers(args))
    _emit({"family": args.family, "seed": args.seed, "reps": args.reps, "rows": rows}, args)
    return EXIT_OK


# ---------------------------------------------------------------- parser

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=DEFAULT_SEED, help="64-bit seed (default 0xDEC0DE)")
    common.add_argument("--reps", type=int, default=100_000, help="Monte Carlo draws")
    common.add_argument("--workers", type=int, default=0, help="threads (0 = available CPUs)")
    common.add_argument("--out", default=None, help="write the JSON report here")
    common.add_argument("--budget", type=int, default=DEFAULT_BUDGET, help="enumeration budget")
    common.add_argument("--config", default=None, help="JSON file of option defaults")

    p = argparse.ArgumentParser(prog="stratperm", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"stratperm {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    b = sub.add_parser("bound", parents=[common], help="rate quantities for a matrix or design")
    b.add_argument("input", help="matrix JSON or design CSV")
    b.add_argument("--method", default="all", choices=("all",) + RATE_METHODS + ("wasserstein", "design"))
    b.set_defaults(func=cmd_bound)

    s = sub.add_parser("simulate", parents=[common], help="Monte Carlo law and distances to N(0,1)")
    s.add_argument("input", help="matrix JSON")
    s.add_argument("--dump", default=None, help="write sorted draws as CSV")
    s.set_defaults(func=cmd_simulate)

    o = sub.add_parser("oracle", parents=[common], help="verify identities by enumeration")
    o.add_argument("input", help="matrix JSON")
    o.add_argument("--tolerance", type=float, default=1e-10)
    o.set_defaults(func=cmd_oracle)

    d = sub.add_parser("design", parents=[common], help="compile a design CSV")
    d.add_argument("input", help="design CSV")
    d.set_defaults(func=cmd_design)

    ps = sub.add_parser("poststrat", parents=[common], help="simulate post-stratified conditioning")
    ps.add_argument("input", help="population CSV (stratum, Y or Y1/Y0)")
    ps.add_argument("--n1", type=int, default=None, help="global sample or treated size")
    ps.set_defaults(func=cmd_poststrat)

    t = sub.add_parser("test", parents=[common], help="stratified permutation or IV test")
    t.add_argument("input", help="CSV with stratum, z, y and optional d")
    t.add_argument("--method", default="exact", choices=METHODS)
    t.add_argument("--alternative", default="two_sided", choices=ALTERNATIVES)
    t.add_argument("--beta0", type=float, default=0.0)
    t.add_argument("--invert", action="store_true", help="confidence set over --grid")
    t.add_argument("--alpha", type=float, default=0.05)
    t.add_argument("--grid", default=None, help="start:stop:num or comma list (use --grid=-1:1:21 for a negative start)")
    t.set_defaults(func=cmd_test)

    sc = sub.add_parser("scaling", parents=[common], help="order study over matrix families")
    sc.add_argument("--family", default="normal", choices=FAMILIES)
    sc.add_argument("--K", default="1,4,16", help="comma list of stratum counts")
    sc.add_argument("--n", default="64,256,1024", help="comma list of sizes")
    sc.set_defaults(func=cmd_scaling)
    return p


def parse_args(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.config:
        with open(args.config) as fh:
            cfg = json.load(fh)
        if not isinstance(cfg, dict):
            raise StratPermError("config file must hold a JSON object")
        sub = parser._subparsers._group_actions[0].choices[args.command]
        sub.set_defaults(**cfg)
        args = parser.parse_args(argv)
    if args.reps < 1:
        parser.error("--reps must be at least 1")
    if not 0 <= args.seed < 2**64:
        parser.error("--seed must be a 64-bit unsigned integer")
    return args


def _format_warning(message, category, filename, lineno, line=None):
    return f"warning: {category.__name__}: {message}\n"


def main(argv=None) -> int:
    warnings.formatwarning = _format_warning
    try:
        args = parse_args(argv)
    except (OSError, json.JSONDecodeError, StratPermError) as exc:
        sys.stderr.write(json.dumps({"error": type(exc).__name__, "message": str(exc)}) + "\n")
        return EXIT_INPUT
    except SystemExit as exc:  # argparse usage errors are input errors
        return EXIT_OK if exc.code in (0, None) else EXIT_INPUT
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("default")
            return args.func(args)
    except BudgetExceeded as exc:
        payload = {"error": "BudgetExceeded", "message": str(exc)}
    except (StratPermError, ValueError, OSError, KeyError) as exc:
        payload = {"error": type(exc).__name__, "message": str(exc)}
        for attr in ("line", "column", "invariant"):
            if getattr(exc, attr, None) is not None:
                payload[attr] = getattr(exc, attr)
    sys.stderr.write(json.dumps(payload, sort_keys=True) + "\n")
    return EXIT_INPUT


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())

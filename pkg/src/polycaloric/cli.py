"""Command-line entry point: ``polycaloric {solve,verify,compare,kernel}``.

Exit codes: 0 success, 1 at least one verified property failed, 2 invalid
configuration, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import datetime as _dt
import hashlib
import io
import itertools
import json
import math
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np
from scipy.interpolate import CubicSpline

from .bessel_diffop import apply_B
from .config import ConfigError, ScenarioConfig, load_config
from .fd_oracle import Grid1D, InstabilityError, convergence_study, fd_solve, fd_solve_2d
from .kernel import g0, kernel_mass, weight
from .solver import ValidationError, _heat_operator, solve_full
from .suite import run_suite

SCHEMA_VERSION = 1
OUT_ENV = "POLYCALORIC_OUT"
DEFAULT_OUT = "polycaloric-out"

EXIT_OK, EXIT_FAILED, EXIT_CONFIG, EXIT_NUMERIC = 0, 1, 2, 3


def _fmt(v) -> str:
    return format(float(v), ".17g")


def _write_csv(path: Path, header: list[str], rows) -> None:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_fmt(v) for v in row])
    path.write_text(buf.getvalue(), encoding="utf-8")


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else str(v)
    if isinstance(obj, np.integer):
        return int(obj)
    return obj


def _write_report(path: Path, config: ScenarioConfig, command: str, results: list, summary: dict, timing: dict) -> dict:
    body = {
        "schema_version": SCHEMA_VERSION,
        "command": command,
        "config_hash": config.config_hash,
        "results": _jsonable(results),
        "summary": _jsonable(summary),
    }
    canon = json.dumps(body, sort_keys=True, separators=(",", ":"))
    body["content_hash"] = hashlib.sha256(canon.encode()).hexdigest()
    # wall-clock data is kept apart from the hashed content
    body["timing"] = _jsonable(timing)
    path.write_text(json.dumps(body, sort_keys=True, indent=2) + "\n", encoding="utf-8")
    return body


def _out_dir(args, config: ScenarioConfig) -> Path:
    out = args.out or os.environ.get(OUT_ENV) or config.output.get("dir") or DEFAULT_OUT
    path = Path(out)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _timing(start: float) -> dict:
    return {
        "wall_seconds": time.perf_counter() - start,
        "finished_utc": _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds"),
    }


def _map(fn, items, jobs: int):
    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(fn, items))
    return [fn(i) for i in items]


# --------------------------------------------------------------------------
# subcommands


def _probe_grid(config: ScenarioConfig, seed: int):
    ver = config.verification
    n = config.n
    pts = [(list(xs), float(t)) for t in ver["t"] for xs in itertools.product(ver["x"], repeat=n)]
    if ver["random_probes"]:
        rng = np.random.default_rng(seed)
        for _ in range(int(ver["random_probes"])):
            pts.append((list(rng.uniform(0.0, 3.0, n)), float(rng.uniform(0.01, 1.0))))
    return pts


def cmd_solve(args, config: ScenarioConfig) -> int:
    start = time.perf_counter()
    out = _out_dir(args, config)
    prob = config.build_problem()
    ev = solve_full(prob, config.quadrature, validate=not args.no_validate)
    pts = _probe_grid(config, args.seed)
    vals = _map(lambda p: ev.eval_u(p[0], p[1]), pts, args.jobs)
    header = [f"x_{k + 1}" for k in range(prob.n)] + ["t", "u"]
    _write_csv(out / "solution.csv", header, ([*x, t, u] for (x, t), u in zip(pts, vals)))
    q = config.quadrature
    results = [{
        "name": "solve",
        "mode": ev.mode,
        "points": len(pts),
        "max_abs_u": max(abs(v) for v in vals),
        "quadrature": {"kind": q.kind, "rtol": q.rtol, "max_level": q.max_level, "trunc_c": q.trunc_c, "margin": q.margin},
    }]
    _write_report(out / "solve.json", config, "solve", results, {"csv": "solution.csv"}, _timing(start))
    print(f"wrote {len(pts)} values to {out / 'solution.csv'}")
    return EXIT_OK


def cmd_verify(args, config: ScenarioConfig) -> int:
    start = time.perf_counter()
    out = _out_dir(args, config)
    overrides = {}
    for item in args.tol or []:
        name, _, val = item.partition("=")
        try:
            overrides[name] = float(val)
        except ValueError:
            raise ConfigError(f"bad --tol value {item!r}; expected NAME=NUMBER", "<command line>") from None
    results = run_suite(config, args.filter, args.jobs, args.seed, overrides)
    if not results:
        raise ConfigError(f"filter {args.filter!r} selects no properties", "<command line>")
    counts = {s: sum(r["status"] == s for r in results) for s in ("pass", "fail", "error", "skipped")}
    summary = {"passed": counts["fail"] == 0 and counts["error"] == 0, **counts, "filter": args.filter}
    _write_report(out / "verify.json", config, "verify", results, summary, _timing(start))
    for r in results:
        m = "-" if r["measured"] is None else f"{r['measured']:.3e}"
        print(f"{r['status'].upper():7s} {r['name']:28s} measured={m} tol={r['tolerance']:.1e}")
    return EXIT_OK if summary["passed"] else EXIT_FAILED


def _far_values(ev, prob, L: float, T: float):
    # Dirichlet data at x = L from the analytic evaluator, sampled and splined in t
    ts = np.linspace(0.0, T, 33)
    w0 = [ev.eval_u([L], t) for t in ts]
    fars = [CubicSpline(ts, w0)]
    if prob.m == 2:
        op = _heat_operator(lambda x, t: ev.eval_u(x, t), prob.gamma.gamma, 1e-2, 1e-3)
        g = prob.gamma.gamma[0]
        w1 = [float(prob.phis[1].evaluate(np.array([L])) - apply_B(g, prob.phis[0], 0, np.array([L])))]
        w1 += [op(np.array([L]), t) for t in ts[1:]]
        fars.append(CubicSpline(ts, w1))
    return [lambda t, s=s: float(s(t)) for s in fars]


def _orders(errors):
    return [math.log2(a / b) if a > 1e-13 and b > 1e-13 else None for a, b in zip(errors, errors[1:])]


def cmd_compare(args, config: ScenarioConfig) -> int:
    start = time.perf_counter()
    out = _out_dir(args, config)
    prob = config.build_problem()
    fd = config.verification["fd"]
    grid = Grid1D(float(fd["L"]), int(fd["N"]), float(fd["dt"]), float(fd["T"]))
    ev = solve_full(prob, config.quadrature, validate=not args.no_validate)
    x_max = 0.75 * grid.L
    stride = max(1, grid.N // 256)
    if prob.n == 1:
        if prob.m > 2:
            raise ConfigError("compare supports m <= 2", config.source)
        fars = _far_values(ev, prob, grid.L, grid.T)
        res = fd_solve(prob, grid, far_values=fars)
        idx = [i for i in range(0, grid.N + 1, stride) if grid.x[i] <= x_max]
        pts = [[grid.x[i]] for i in idx]
        fd_vals = [res.final[i] for i in idx]
    elif prob.n == 2 and prob.m == 1:
        res = fd_solve_2d(prob, grid)
        u2 = res.final.reshape(grid.N + 1, grid.N + 1)
        idx = [i for i in range(0, grid.N + 1, stride * 4) if grid.x[i] <= x_max / 2]
        pts = [[grid.x[i], grid.x[j]] for i in idx for j in idx]
        fd_vals = [u2[i, j] for i in idx for j in idx]
        fars = None
    else:
        raise ConfigError("compare needs n = 1 (m <= 2) or n = 2 with m = 1", config.source)
    ana = _map(lambda p: ev.eval_u(p, grid.T), pts, args.jobs)
    gaps = np.abs(np.array(ana) - np.array(fd_vals))
    header = [f"x_{k + 1}" for k in range(prob.n)] + ["u_analytic", "u_fd", "gap"]
    _write_csv(out / "compare.csv", header, ([*p, a, f, g] for p, a, f, g in zip(pts, ana, fd_vals, gaps)))

    results = [{"name": "compare.gap", "max": float(gaps.max()), "rms": float(np.sqrt(np.mean(gaps**2))), "points": len(pts)}]
    if prob.n == 1 and not args.skip_orders:
        Nc = max(64, grid.N // 16)
        dt0 = grid.T / 10
        tstudy = convergence_study(prob, [Grid1D(grid.L, Nc, dt0 / 2**k, grid.T) for k in range(3)], far_values=fars)
        xs_ref = {}

        def reference(x):
            return np.array([xs_ref.setdefault(float(v), ev.eval_u([float(v)], grid.T)) for v in x])

        sstudy = convergence_study(
            prob, [Grid1D(grid.L, Nc * 2**k, grid.T / 500, grid.T) for k in range(3)], reference, x_max=min(4.0, x_max), far_values=fars
        )
        results.append({"name": "compare.time_order", "errors": tstudy["errors"], "orders": _orders(tstudy["errors"])})
        results.append({"name": "compare.space_order", "errors": sstudy["errors"], "orders": _orders(sstudy["errors"])})
    summary = {"max_gap": float(gaps.max()), "grid": {"L": grid.L, "N": grid.N, "dt": grid.dt, "T": grid.T}}
    _write_report(out / "compare.json", config, "compare", results, summary, _timing(start))
    for r in results:
        print(json.dumps(_jsonable(r), sort_keys=True))
    return EXIT_OK


def cmd_kernel(args, config: ScenarioConfig) -> int:
    start = time.perf_counter()
    out = _out_dir(args, config)
    kt = config.kernel_table
    rows, masses = [], []
    for g in kt["gamma"]:
        for x in kt["x"]:
            for t in kt["t"]:
                for s in kt["s"]:
                    rows.append([g, x, s, t, weight(g, x, s, t), g0(x, s, t)])
                masses.append({"gamma": g, "x": x, "t": t, "mass_error": kernel_mass(g, x, t) - 1.0})
    _write_csv(out / "kernel.csv", ["gamma", "x", "s", "t", "weight", "g0"], rows)
    summary = {"rows": len(rows), "max_mass_error": max(abs(m["mass_error"]) for m in masses)}
    _write_report(out / "kernel.json", config, "kernel", masses, summary, _timing(start))
    print(f"wrote {len(rows)} rows to {out / 'kernel.csv'}")
    return EXIT_OK


# --------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="polycaloric", description="Singular polycaloric equation: solve, verify, cross-check.")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="scenario file (TOML); built-in default if omitted")
    common.add_argument("--out", help=f"output directory (default: ${OUT_ENV} or {DEFAULT_OUT})")
    common.add_argument("--jobs", type=int, default=1, help="worker threads")
    common.add_argument("--seed", type=int, default=0, help="seed for randomized probe points")
    common.add_argument("--no-validate", action="store_true", help="warn instead of failing on incompatible initial data")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("solve", parents=[common], help="evaluate u(x, t) on the probe grid")
    v = sub.add_parser("verify", parents=[common], help="run the property suite")
    v.add_argument("--filter", help="glob over property names, comma-separated (e.g. 'kernel.*')")
    v.add_argument("--tol", action="append", metavar="NAME=VALUE", help="override a tolerance (NAME may be a glob)")
    c = sub.add_parser("compare", parents=[common], help="analytic evaluator vs finite differences")
    c.add_argument("--skip-orders", action="store_true", help="skip the convergence-order study")
    sub.add_parser("kernel", parents=[common], help="tabulate the kernel weight")
    return parser


_COMMANDS = {"solve": cmd_solve, "verify": cmd_verify, "compare": cmd_compare, "kernel": cmd_kernel}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if not hasattr(args, "filter"):
        args.filter = None
    if args.jobs < 1:
        print("error: --jobs must be >= 1", file=sys.stderr)
        return EXIT_CONFIG
    try:
        config = load_config(args.config)
        return _COMMANDS[args.command](args, config)
    except (ConfigError, ValidationError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ArithmeticError, InstabilityError, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())

"""Named numerical properties run by ``polycaloric verify``.

Each property measures one non-negative number (a residual, a gap, or the
distance of an observed order from its target) and passes when that number
does not exceed its tolerance.  Properties are independent, so they may run
concurrently; results are always reported in name order.
"""

from __future__ import annotations

import fnmatch
import math
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field as dc_field
from typing import Callable

import numpy as np

from . import fields as F
from .bessel_diffop import (
    DeltaBPowerField,
    GammaVec,
    ProblemSpec,
    apply_B,
    apply_DeltaB_pow,
    assemble_fk,
    assemble_fk_alternate,
)
from .config import ScenarioConfig
from .ek_ops import (
    EKField,
    EKParams,
    ek_apply,
    ek_inverse_generalized,
    intertwine_residual,
    intertwine_sum_residual,
    inverse_intertwine_residual,
)
from .fd_oracle import Grid1D, fd_solve
from .kernel import KernelWeight, g0, kernel_mass, semigroup_residual, weber_sonine_residual, weight
from .numerics import QuadSpec
from .solver import solve_full, solve_homogeneous, transmutation_solution, verify

__all__ = ["Property", "PROPERTIES", "select", "run_suite", "SuiteContext"]

EK_SPEC = QuadSpec(rtol=1e-12)


@dataclass(frozen=True)
class Property:
    name: str
    tolerance: float
    run: Callable[["SuiteContext"], tuple[float, dict]]
    description: str = ""


@dataclass
class SuiteContext:
    config: ScenarioConfig
    seed: int = 0
    _lock: threading.Lock = dc_field(default_factory=threading.Lock, repr=False)
    _report: object = dc_field(default=None, repr=False)

    def rng(self, salt: int) -> np.random.Generator:
        # one stream per property so concurrency cannot change the draws
        return np.random.default_rng([self.seed, salt])


# --------------------------------------------------------------------------
# EK operators


def _eigenrelation(ctx):
    worst = 0.0
    for a in (0.25, 0.5, 0.75):
        for eta in (-0.5, 0.0, 1.0):
            p = EKParams((a,), (eta,))
            for beta in (0, 1, 2):
                f = F.monomial([2 * beta])
                for x in (0.5, 1.0, 2.0):
                    exact = math.gamma(eta + beta + 1) / math.gamma(eta + a + beta + 1) * x ** (2 * beta)
                    worst = max(worst, abs(ek_apply(p, f, x, EK_SPEC) - exact) / abs(exact))
    return worst, {"grid_points": 81}


def _smooth_catalog():
    return [F.gaussian(), F.gaussian(a=0.5), F.poly_gauss(1), F.poly_gauss(2), F.gaussian(a=2.0, scale=3.0)]


_ROUND_TRIP_X = (0.3, 0.7, 1.0, 1.6, 2.2)


def _round_trip(params):
    worst = 0.0
    for f in _smooth_catalog():
        forward = EKField(params, f, EK_SPEC)
        for x in _ROUND_TRIP_X:
            back = ek_inverse_generalized(params, forward, x, EK_SPEC)
            exact = float(f.evaluate(np.array([x])))
            worst = max(worst, abs(back - exact) / abs(exact))
    return worst


def _roundtrip_plain(ctx):
    worst = max(_round_trip(EKParams((a,), (-0.5,))) for a in (0.3, 0.75))
    return worst, {"fields": len(_smooth_catalog()), "points": len(_ROUND_TRIP_X)}


def _roundtrip_generalized(ctx):
    worst = max(_round_trip(EKParams((a,), (-0.5,), (lam,))) for a, lam in ((0.6, 0.5), (0.4, 1.0)))
    return worst, {"fields": len(_smooth_catalog()), "points": len(_ROUND_TRIP_X)}


def _ek_linearity(ctx):
    p = EKParams((0.6,), (-0.5,), (0.3,))
    f, g = F.gaussian(), F.poly_gauss(1)
    combo = F.linear_combination([f, g], [2.0, -0.5])
    worst = 0.0
    for x in (0.4, 1.0, 2.0):
        lhs = ek_apply(p, combo, x, EK_SPEC)
        rhs = 2.0 * ek_apply(p, f, x, EK_SPEC) - 0.5 * ek_apply(p, g, x, EK_SPEC)
        worst = max(worst, abs(lhs - rhs))
    return worst, {}


def _ek_lambda_continuity(ctx):
    worst = 0.0
    for f in (F.gaussian(), F.poly_gauss(1)):
        for x in (0.5, 1.0, 2.0):
            a = ek_apply(EKParams((0.6,), (-0.5,), (1e-6,)), f, x, EK_SPEC)
            b = ek_apply(EKParams((0.6,), (-0.5,)), f, x, EK_SPEC)
            worst = max(worst, abs(a - b))
    return worst, {}


_PROBES_1D = (0.5, 1.0, 1.7)


def _intertwine_fields():
    return [F.gaussian(), F.poly_gauss(1), F.gaussian(a=0.5, scale=2.0)]


def _intertwine_single(ctx):
    p = EKParams((0.6,), (-0.5,), (0.3,))
    vals = [abs(intertwine_residual(p, f, 0, 1, x, EK_SPEC)) for f in _intertwine_fields() for x in _PROBES_1D]
    return max(vals), {"cases": len(vals)}


def _intertwine_power2(ctx):
    vals = []
    for lam in (0.0, 0.3):
        p = EKParams((0.6,), (-0.5,), (lam,))
        vals += [abs(intertwine_residual(p, f, 0, 2, x, EK_SPEC)) for f in _intertwine_fields() for x in _PROBES_1D]
    return max(vals), {"cases": len(vals)}


def _intertwine_laplacian(ctx):
    vals = []
    p1 = EKParams((0.6,), (-0.5,), (0.4,))
    p2 = EKParams((0.5, 0.7), (-0.5, -0.5))
    for q in (1, 2):
        vals += [abs(intertwine_sum_residual(p1, f, q, x, EK_SPEC)) for f in _intertwine_fields() for x in _PROBES_1D]
        for f in (F.gaussian(2), F.poly_gauss(1, n=2), F.gaussian(2, a=0.5)):
            for x in ([1.0, 0.6], [0.4, 1.3], [1.5, 1.5]):
                vals.append(abs(intertwine_sum_residual(p2, f, q, x, EK_SPEC)))
    return max(vals), {"cases": len(vals)}


def _intertwine_inverse(ctx):
    p = EKParams((0.75,), (-0.5,))
    vals = [abs(inverse_intertwine_residual(p, f, 1, x, EK_SPEC)) for f in _intertwine_fields() + [F.monomial([4])] for x in _PROBES_1D]
    return max(vals), {"cases": len(vals)}


# --------------------------------------------------------------------------
# Bessel operators


def _parity_limit(ctx):
    # B f(x) approaches the x = 0 row like x^2; a gap that fails to shrink
    # between x = 1e-2 and 1e-3 counts as infinite
    worst = 0.0
    for g in (-0.4, 0.0, 0.25):
        for f in (F.gaussian(), F.poly_gauss(1), F.monomial([2])):
            at0 = float(apply_B(g, f, 0, np.array([0.0])))
            far, near = (abs(float(apply_B(g, f, 0, np.array([x]))) - at0) for x in (1e-2, 1e-3))
            if near > 0.02 * far + 1e-12:
                return math.inf, {"gamma": g, "field": f.name}
            worst = max(worst, near)
    return worst, {"x": 1e-3}


def _fk_indexing(ctx):
    worst = 0.0
    xs = np.linspace(0.0, 3.0, 7)[:, None]
    for g in (-0.3, 0.25):
        for phis in ((F.poly_gauss(2), F.gaussian()), (F.monomial([2]), F.zero()), (F.poly_gauss(3), F.poly_gauss(2), F.gaussian())):
            prob = ProblemSpec((g,), phis)
            for k in range(prob.m):
                a = assemble_fk(prob, k).evaluate(xs)
                b = assemble_fk_alternate(prob, k).evaluate(xs)
                worst = max(worst, float(np.max(np.abs(b - (-1) ** k * a))))
    return worst, {"relation": "alternate = (-1)^k * primary"}


def _power_composition(ctx):
    worst = 0.0
    g = (0.1, 0.2)
    for f in (F.gaussian(2), F.poly_gauss(1, n=2)):
        once = DeltaBPowerField(f, g, 1)
        for x in ([0.0, 0.5], [0.7, 1.2], [2.0, 0.0]):
            a = float(apply_DeltaB_pow(g, f, 2, np.array(x)))
            b = float(apply_DeltaB_pow(g, once, 1, np.array(x)))
            worst = max(worst, abs(a - b))
    return worst, {}


# --------------------------------------------------------------------------
# kernel


def _kernel_mass(ctx):
    worst = 0.0
    for g in (-0.4, 0.0, 0.4):
        for x in np.linspace(0.0, 5.0, 5):
            for t in (0.1, 1.0, 10.0):
                worst = max(worst, abs(kernel_mass(g, float(x), t) - 1.0))
    return worst, {"grid_points": 45}


def _kernel_positivity(ctx):
    rng = ctx.rng(11)
    g = rng.uniform(-0.499, 0.499, 10_000)
    x = rng.uniform(0, 10, 10_000)
    s = rng.uniform(0, 10, 10_000)
    t = 10 ** rng.uniform(-3, 1, 10_000)
    w = np.array([weight(gi, xi, si, ti) for gi, xi, si, ti in zip(g, x, s, t)])
    bad = float(np.sum(~np.isfinite(w)))
    return max(0.0, -float(np.min(w))) + bad, {"samples": 10_000}


def _classical_limit(ctx):
    xs = np.linspace(0.0, 6.0, 61)
    ss = np.linspace(0.1, 6.0, 60)
    S, X = np.meshgrid(ss, xs)
    gap = float(np.max(np.abs(weight(-0.499, X, S, 1.0) - g0(X, S, 1.0))))
    return gap, {"t": 1.0, "s_min": 0.1}


_WS_CASES = [
    (0.25, 1.0, 1.0, 1.0),
    (-0.25, 0.5, 2.0, 0.5),
    (0.0, 2.0, 0.1, 0.2),
    (0.4, 3.0, 2.5, 0.1),
    (-0.4, 1.0, 3.0, 2.0),
    (0.1, 0.3, 0.3, 0.05),
    (0.49, 4.0, 1.0, 1.0),
    (-0.1, 1.5, 1.2, 0.3),
    (0.3, 0.8, 2.2, 5.0),
]


def _weber_sonine(ctx):
    vals = [abs(weber_sonine_residual(*c)) for c in _WS_CASES]
    return max(vals), {"cases": len(vals)}


def _semigroup(ctx):
    vals = []
    for g in (F.gaussian(), F.constant(), F.monomial([2])):
        for x, t, tau in ((0.5, 1.0, 0.4), (1.3, 0.5, 0.1)):
            vals.append(abs(semigroup_residual(g, x, t, tau)))
    return max(vals), {"cases": len(vals)}


def _delta_order(ctx):
    # |int w g ds - g(x)| ~ C t; order from the two smallest times
    kw = KernelWeight(GammaVec((0.25,)))
    spec = QuadSpec(kind="gaussian_tail", rtol=1e-13)
    g = F.gaussian()
    orders = []
    for x in (0.0, 0.7, 1.5):
        devs = []
        for t in (1e-2, 1e-3, 1e-4):
            s, w = kw.axis_rule(0, x, t, spec, 2)
            devs.append(abs(float(np.dot(w, g.evaluate(s[:, None]))) - math.exp(-x * x)))
        orders.append(math.log(devs[1] / devs[2]) / math.log(10.0))
    return max(abs(o - 1.0) for o in orders), {"orders": orders}


# --------------------------------------------------------------------------
# solver (scenario-specific)


def _exact_catalog(ctx):
    worst = 0.0
    for g in ctx.config.gamma:
        cases = [
            (ProblemSpec((g,), (F.constant(),)), lambda x, t: 1.0),
            (ProblemSpec((g,), (F.monomial([2]),)), lambda x, t: x * x + (4 * g + 4) * t),
            (ProblemSpec((g,), (F.zero(), F.constant())), lambda x, t: t),
            (ProblemSpec((g,), (F.zero(),), F.make_source("constant")), lambda x, t: t),
            (ProblemSpec((g,), (F.zero(), F.zero()), F.make_source("constant")), lambda x, t: t * t / 2),
            (ProblemSpec((g,), (F.zero(),), F.make_source("square_sum")), lambda x, t: x * x * t + (4 * g + 4) * t * t / 2),
        ]
        for prob, exact in cases:
            ev = solve_full(prob, ctx.config.quadrature)
            for x in (0.0, 1.0, 2.0, 3.0):
                for t in (0.01, 0.5, 2.0):
                    worst = max(worst, abs(ev.eval_u([x], t) - exact(x, t)))
    return worst, {"gammas": list(ctx.config.gamma)}


def _scenario_report(ctx):
    # shared by the solver.* properties; computed once per context
    with ctx._lock:
        if ctx._report is None:
            cfg = ctx.config
            ver = cfg.verification
            prob = cfg.build_problem()
            ev = solve_full(prob, cfg.quadrature)
            n = prob.n
            probes = [([float(v)] * n, float(t)) for v in ver["x"] if v > 0 for t in ver["t"]]
            if ver["random_probes"]:
                rng = ctx.rng(97)
                for _ in range(int(ver["random_probes"])):
                    probes.append((list(rng.uniform(0.1, 3.0, n)), float(rng.uniform(0.05, 1.0))))
            ctx._report = verify(ev, probes, ver["h_x"], ver["h_t"], ver["init_times"])
        return ctx._report


def _pde_residual(ctx):
    rep = _scenario_report(ctx)
    return rep.summary["pde_max"], {"rms": rep.summary["pde_rms"], "probes": len(rep.probes)}


def _initial_order(ctx):
    rep = _scenario_report(ctx)
    asym = [blk["empirical_order"][-1] for blk in rep.initial]
    return max(abs(o - 1.0) for o in asym), {"orders": asym, "max_deviation": rep.summary["initial_max_deviation"]}


def _boundary(ctx):
    rep = _scenario_report(ctx)
    return rep.summary["boundary_max"], {}


def _transmutation(ctx):
    prob = ctx.config.build_problem()
    if prob.n != 1 or prob.m != 1 or prob.source is not None:
        return None, {"reason": "needs n = 1, m = 1, no source"}
    g = prob.gamma.gamma[0]
    ev = solve_homogeneous(prob, ctx.config.quadrature)
    worst = 0.0
    xs = np.linspace(0.25, 3.0, 5)
    for t in (0.1, 0.5):
        u = transmutation_solution(g, prob.phis[0], t)
        ref = np.array([ev.eval_u([x], t) for x in xs])
        worst = max(worst, float(np.max(np.abs(u(xs) - ref))))
    return worst, {"points": 10}


def _fd_exactness(ctx):
    g = ctx.config.gamma[0]
    res = fd_solve(ProblemSpec((g,), (F.monomial([2]),)), Grid1D(8.0, 128, 1e-2, 0.5), far_values=[lambda t: 64.0 + (4 * g + 4) * t])
    x = res.grid.x
    return float(np.max(np.abs(res.final - (x * x + (4 * g + 4) * 0.5)))), {}


def _fd_max_principle(ctx):
    g = ctx.config.gamma[0]
    res = fd_solve(ProblemSpec((g,), (F.gaussian(),)), Grid1D(8.0, 256, 1e-2, 1.0), save_times=np.linspace(0, 1, 11))
    over = max(0.0, float(res.history.max()) - 1.0, -float(res.history.min()))
    return over, {}


PROPERTIES: tuple[Property, ...] = tuple(
    sorted(
        [
            Property("ek.eigenrelation", 1e-9, _eigenrelation, "power-law eigenfunctions of the EK operator"),
            Property("ek.roundtrip_plain", 1e-8, _roundtrip_plain, "plain inverse after forward operator"),
            Property("ek.roundtrip_generalized", 1e-7, _roundtrip_generalized, "Bessel-kernel inverse after forward operator"),
            Property("ek.linearity", 1e-12, _ek_linearity),
            Property("ek.lambda_continuity", 1e-8, _ek_lambda_continuity),
            Property("ek.intertwine.single", 1e-6, _intertwine_single, "B_{eta+alpha} + lam^2 after J equals J after B_eta"),
            Property("ek.intertwine.power2", 1e-5, _intertwine_power2, "second powers of the single-axis intertwining"),
            Property("ek.intertwine.laplacian", 1e-5, _intertwine_laplacian, "Delta_B powers, q in {1, 2}, n in {1, 2}"),
            Property("ek.intertwine.inverse", 1e-5, _intertwine_inverse, "intertwining of the inverse operator"),
            Property("bessel.parity_limit", 1e-4, _parity_limit),
            Property("bessel.fk_indexing", 1e-12, _fk_indexing),
            Property("bessel.power_composition", 1e-9, _power_composition),
            Property("kernel.mass", 1e-10, _kernel_mass),
            Property("kernel.positivity", 0.0, _kernel_positivity),
            Property("kernel.classical_limit", 2e-2, _classical_limit),
            Property("kernel.weber_sonine", 1e-8, _weber_sonine),
            Property("kernel.semigroup", 1e-8, _semigroup),
            Property("kernel.delta_order", 0.1, _delta_order, "|observed order - 1| of the t -> 0 limit"),
            Property("solver.exact_catalog", 1e-8, _exact_catalog),
            Property("solver.pde_residual", 1e-4, _pde_residual),
            Property("solver.initial_order", 0.1, _initial_order, "|observed order - 1| of the initial-data limit"),
            Property("solver.boundary", 1e-7, _boundary),
            Property("solver.transmutation", 1e-6, _transmutation),
            Property("fd.polynomial_exactness", 1e-6, _fd_exactness),
            Property("fd.max_principle", 1e-10, _fd_max_principle),
        ],
        key=lambda p: p.name,
    )
)


def select(pattern: str | None) -> list[Property]:
    """Properties whose names match the glob ``pattern`` (all if ``None``)."""
    if not pattern:
        return list(PROPERTIES)
    pats = [p.strip() for p in pattern.split(",") if p.strip()]
    return [p for p in PROPERTIES if any(fnmatch.fnmatchcase(p.name, pat) for pat in pats)]


def _run_one(prop: Property, ctx: SuiteContext, tolerance: float) -> dict:
    try:
        measured, details = prop.run(ctx)
    except (ArithmeticError, ValueError, np.linalg.LinAlgError) as exc:
        return {"name": prop.name, "status": "error", "measured": None, "tolerance": tolerance, "details": {"error": f"{type(exc).__name__}: {exc}"}}
    if measured is None:
        return {"name": prop.name, "status": "skipped", "measured": None, "tolerance": tolerance, "details": details}
    measured = float(measured)
    ok = math.isfinite(measured) and measured <= tolerance
    return {"name": prop.name, "status": "pass" if ok else "fail", "measured": measured, "tolerance": tolerance, "details": details}


def run_suite(config: ScenarioConfig, pattern: str | None = None, jobs: int = 1, seed: int = 0, overrides: dict | None = None) -> list[dict]:
    """Run the selected properties; results come back sorted by name."""
    props = select(pattern)
    tols = {**config.verification.get("tolerances", {}), **(overrides or {})}
    ctx = SuiteContext(config, seed)

    def tol_for(p):
        if p.name in tols:
            return float(tols[p.name])
        for pat, val in sorted(tols.items()):
            if fnmatch.fnmatchcase(p.name, pat):
                return float(val)
        return p.tolerance

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(lambda p: _run_one(p, ctx, tol_for(p)), props))
    else:
        results = [_run_one(p, ctx, tol_for(p)) for p in props]
    return results

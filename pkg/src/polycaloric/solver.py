"""Closed-form solutions of the singular polycaloric Cauchy problem.

The homogeneous solution is

    u(x, t) = sum_k t^k / k! int f_k(s) prod_j w_j(x_j, s_j, t) ds,

and the Duhamel term is

    V(x, t) = 1/(m-1)! int_0^t sigma^{m-1} A(x, t - sigma, sigma) dsigma,
    A(x, tau, sigma) = int f(s, tau) prod_j w_j(x_j, s_j, sigma) ds,

with ``w_j`` the normalized kernel weights from :mod:`polycaloric.kernel`.
Integrals over the orthant are tensor products of per-axis Gaussian-tail
rules.  Separable integrands (the whole shipped catalog, including
``Delta_B`` powers of it) are contracted axis by axis.
"""

from __future__ import annotations

import itertools
import math
import time
import warnings
from dataclasses import dataclass, field as dc_field
from typing import Callable, Sequence

import numpy as np

from .bessel_diffop import (
    BesselPowerField,
    DeltaBPowerField,
    ProblemSpec,
    _multinomial,
    apply_B_pow,
    assemble_fk,
    validate_initial_data,
)
from .ek_ops import EKParams, EKField
from .fields import CallableField, ScalarField, SeparableField, _Combination, as_points
from .kernel import KernelWeight, g0
from .numerics import QuadratureError, QuadSpec, panel_rule

__all__ = [
    "SolutionEvaluator",
    "ResidualReport",
    "ValidationError",
    "solve_homogeneous",
    "solve_inhomogeneous",
    "solve_full",
    "verify",
    "transmutation_solution",
    "DEFAULT_QUAD",
]

DEFAULT_QUAD = QuadSpec(kind="gaussian_tail", rtol=1e-11)


class ValidationError(ValueError):
    """Initial data violate the hypotheses of the solution formula."""

    def __init__(self, report):
        super().__init__(f"initial data failed validation: {report.violations}")
        self.report = report


# --------------------------------------------------------------------------
# separable decomposition

Term = tuple[float, tuple[Callable[[np.ndarray], np.ndarray], ...]]


def _axis_field(factor) -> SeparableField:
    return SeparableField([(1.0, [factor])], 1, "factor")


def _bessel_factor(gamma: float, factor, power: int):
    if power == 0:
        return lambda s: factor(s)
    f1 = _axis_field(factor)
    return lambda s: apply_B_pow(gamma, f1, 0, power, np.asarray(s)[:, None])


def separable_terms(field: ScalarField) -> list[Term] | None:
    """Split ``field`` into ``sum coef * prod_k g_k(x_k)`` or return ``None``."""
    if isinstance(field, SeparableField):
        return [(float(c), tuple(f.__call__ for f in factors)) for c, factors in field.terms]
    if isinstance(field, _Combination):
        out = []
        for c, f in zip(field.coeffs, field.fields):
            sub = separable_terms(f)
            if sub is None:
                return None
            out += [(c * cc, fs) for cc, fs in sub]
        return out
    if isinstance(field, DeltaBPowerField) and isinstance(field.base, SeparableField):
        out = []
        for mult, powers in _multinomial(field.p, field.n):
            for c, factors in field.base.terms:
                fs = tuple(_bessel_factor(g, f, p) for g, f, p in zip(field.gammas, factors, powers))
                out.append((mult * float(c), fs))
        return out
    if isinstance(field, BesselPowerField) and isinstance(field.base, SeparableField):
        return [
            (float(c), tuple(_bessel_factor(g, f, p) for g, f, p in zip(field.gammas, factors, field.powers)))
            for c, factors in field.base.terms
        ]
    return None


class _Integrand:
    """A field prepared for repeated integration against the kernel."""

    def __init__(self, field: ScalarField):
        self.field = field
        self.terms = separable_terms(field)

    def integrate(self, rules) -> float:
        if self.terms is not None:
            total = 0.0
            for c, fs in self.terms:
                if c == 0.0:
                    continue
                prod = c
                for (s, w), f in zip(rules, fs):
                    prod *= float(np.dot(w, f(s)))
                total += prod
            return total
        mesh = np.meshgrid(*[s for s, _ in rules], indexing="ij")
        vals = np.asarray(self.field.evaluate(np.stack(mesh, axis=-1)), dtype=float)
        for _, w in rules:
            vals = np.tensordot(w, vals, axes=([0], [0]))
        return float(vals)


# --------------------------------------------------------------------------
# evaluator


@dataclass(frozen=True)
class SolutionEvaluator:
    """Immutable evaluator of the homogeneous, Duhamel or combined solution.

    ``mode`` is ``"homogeneous"``, ``"inhomogeneous"`` or ``"combined"``.
    Calls are thread-safe: no state changes after construction.
    """

    problem: ProblemSpec
    fks: tuple[ScalarField, ...]
    kernel: KernelWeight
    quadrature: QuadSpec = DEFAULT_QUAD
    mode: str = "homogeneous"
    tau_nodes: int = 24
    _integrands: tuple = dc_field(default=(), init=False, repr=False, compare=False)
    _source_parts: tuple = dc_field(default=(), init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.mode not in ("homogeneous", "inhomogeneous", "combined"):
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.mode != "homogeneous" and self.problem.source is None:
            raise ValueError("the Duhamel term needs a source")
        object.__setattr__(self, "_integrands", tuple(_Integrand(f) for f in self.fks))
        if self.problem.source is not None:
            parts = tuple((_Integrand(g), tc) for g, tc in self.problem.source.parts)
        else:
            parts = ()
        object.__setattr__(self, "_source_parts", parts)

    @property
    def n(self) -> int:
        return self.problem.n

    @property
    def m(self) -> int:
        return self.problem.m

    def with_quadrature(self, spec: QuadSpec) -> "SolutionEvaluator":
        return SolutionEvaluator(self.problem, self.fks, self.kernel, spec, self.mode, self.tau_nodes)

    # ---- kernel averages

    def _average(self, integrands: Sequence[_Integrand], x: np.ndarray, t: float) -> list[float]:
        """``int g(s) prod_j w_j(x_j, s_j, t) ds`` for each integrand, refined together."""
        spec = self.quadrature
        prev = None
        err = math.inf
        for level in range(spec.max_level + 1):
            rules = [self.kernel.axis_rule(j, x[j], t, spec, level) for j in range(self.n)]
            est = np.array([g.integrate(rules) for g in integrands])
            if prev is not None:
                err = float(np.max(np.abs(est - prev)))
                if err <= spec.rtol * max(1.0, float(np.max(np.abs(est)))):
                    return list(est)
            prev = est
        raise QuadratureError("kernel average did not converge", float(np.max(np.abs(prev))), err)

    def homogeneous(self, x, t: float) -> float:
        x = as_points(x, self.n).reshape(self.n)
        if t < 0:
            raise ValueError("t must be non-negative")
        if t == 0:
            return float(self.problem.phis[0].evaluate(x))
        avgs = self._average(self._integrands, x, t)
        return float(sum(t**k / math.factorial(k) * a for k, a in enumerate(avgs)))

    def duhamel(self, x, t: float) -> float:
        x = as_points(x, self.n).reshape(self.n)
        if t < 0:
            raise ValueError("t must be non-negative")
        if t == 0:
            return 0.0
        m = self.m
        integrands = [g for g, _ in self._source_parts]
        tcs = [tc for _, tc in self._source_parts]

        def integral(npts):
            gx, gw = np.polynomial.legendre.leggauss(npts)
            sig = 0.5 * t * (gx + 1)
            total = 0.0
            for si, wi in zip(sig, gw):
                avgs = self._average(integrands, x, si)
                a = sum(av * np.polynomial.polynomial.polyval(t - si, tc) for av, tc in zip(avgs, tcs))
                total += 0.5 * t * wi * si ** (m - 1) * a
            return total / math.factorial(m - 1)

        lo = integral(self.tau_nodes // 2)
        hi = integral(self.tau_nodes)
        if abs(hi - lo) > 1e3 * self.quadrature.rtol * max(1.0, abs(hi)):
            raise QuadratureError("Duhamel time integral did not converge", hi, abs(hi - lo))
        return float(hi)

    def eval_u(self, x, t: float) -> float:
        """Solution value at one point ``x`` (length ``n``) and time ``t >= 0``."""
        if self.mode == "homogeneous":
            return self.homogeneous(x, t)
        if self.mode == "inhomogeneous":
            return self.duhamel(x, t)
        return self.homogeneous(x, t) + self.duhamel(x, t)

    def __call__(self, x, t) -> np.ndarray:
        """Vectorized over points: ``x`` of shape ``(..., n)``, ``t`` broadcastable."""
        x = as_points(x, self.n)
        t = np.broadcast_to(np.asarray(t, dtype=float), x.shape[:-1])
        flat_x = x.reshape(-1, self.n)
        flat_t = t.reshape(-1)
        out = np.array([self.eval_u(xi, float(ti)) for xi, ti in zip(flat_x, flat_t)])
        return out.reshape(x.shape[:-1])


def _build(problem: ProblemSpec, spec: QuadSpec | None, mode: str, validate: bool | None) -> SolutionEvaluator:
    # validate=True raises on bad data, False warns, None skips the check
    if validate is not None:
        report = validate_initial_data(problem)
        if not report.passed:
            if validate:
                raise ValidationError(report)
            warnings.warn(f"proceeding with unvalidated initial data: {report.violations}", UserWarning, stacklevel=3)
    fks = tuple(assemble_fk(problem, k) for k in range(problem.m))
    return SolutionEvaluator(problem, fks, KernelWeight(problem.gamma), spec or DEFAULT_QUAD, mode)


def solve_homogeneous(problem: ProblemSpec, spec: QuadSpec | None = None, validate: bool | None = True) -> SolutionEvaluator:
    """Evaluator of the kernel representation of the homogeneous solution.

    With ``validate=False`` a failed data check only warns; ``None`` skips
    the check (for data known to be admissible by other means).
    """
    return _build(problem, spec, "homogeneous", validate)


def solve_inhomogeneous(problem: ProblemSpec, spec: QuadSpec | None = None, validate: bool | None = True) -> SolutionEvaluator:
    """Evaluator of the Duhamel term (zero initial data, source ``problem.source``).

    ``validate`` is accepted for symmetry; zero data always pass.
    """
    if problem.source is None:
        raise ValueError("solve_inhomogeneous needs a source")
    return _build(problem, spec, "inhomogeneous", None)


def solve_full(problem: ProblemSpec, spec: QuadSpec | None = None, validate: bool | None = True) -> SolutionEvaluator:
    """Homogeneous solution plus the Duhamel term (if a source is present)."""
    mode = "combined" if problem.source is not None else "homogeneous"
    return _build(problem, spec, mode, validate)


# --------------------------------------------------------------------------
# verification


@dataclass
class ResidualReport:
    """Finite-difference verification of a solution evaluator."""

    probes: list[tuple[list[float], float]]
    pde_residuals: list[float]
    initial: list[dict]
    boundary: list[dict]
    summary: dict
    runtime: dict

    def to_dict(self) -> dict:
        return {
            "probes": [{"x": x, "t": t} for x, t in self.probes],
            "pde_residuals": self.pde_residuals,
            "initial": self.initial,
            "boundary": self.boundary,
            "summary": self.summary,
            "runtime": self.runtime,
        }


_T1 = np.array([1.0, -8.0, 0.0, 8.0, -1.0]) / 12.0
_T2 = np.array([-1.0, 16.0, -30.0, 16.0, -1.0]) / 12.0
_OFFS = np.arange(-2, 3)


def _d_dt(fn, x, t, h):
    return sum(c * fn(x, t + o * h) for c, o in zip(_T1, _OFFS) if c) / h


def _bessel_fd(fn, x, t, gamma, k, h):
    # 4th-order B stencil; the evaluator is even in x_k, so nodes left of
    # the axis are reflected
    def at(o):
        y = np.array(x, dtype=float)
        y[k] = abs(y[k] + o * h)
        return fn(y, t)

    vals = [at(o) for o in _OFFS]
    d2 = float(np.dot(_T2, vals)) / h**2
    if x[k] == 0:
        return (2 * gamma + 2) * d2
    d1 = float(np.dot(_T1, vals)) / h
    return d2 + (2 * gamma + 1) / x[k] * d1


def _heat_operator(fn, gammas, hx, ht):
    """``(d/dt - Delta_B) fn`` by finite differences, as a new function of (x, t)."""

    def op(x, t):
        h = ht * max(1.0, t)
        out = _d_dt(fn, x, t, h)
        for k, g in enumerate(gammas):
            out -= _bessel_fd(fn, x, t, g, k, hx)
        return out

    return op


def _default_probes(n: int):
    xs = (0.3, 0.9, 1.6, 2.4)
    ts = (0.1, 0.5, 1.0)
    pts = []
    for xv in itertools.product(xs, repeat=n) if n > 1 else ((v,) for v in xs):
        for t in ts:
            pts.append((list(xv), t))
    if n > 1:
        pts = pts[:: max(1, len(pts) // 12)]
    return pts


def verify(
    evaluator: SolutionEvaluator,
    probes=None,
    h_x: float = 1e-2,
    h_t: float = 1e-3,
    init_times: Sequence[float] = (1e-2, 1e-3, 1e-4),
    init_x: Sequence[float] = (0.0, 0.5, 1.0, 1.5, 2.0, 3.0),
) -> ResidualReport:
    """Check PDE, initial and boundary conditions of ``evaluator`` numerically.

    The PDE residual ``(d/dt - Delta_B)^m u - f`` is formed by nested
    fourth-order central differences (steps ``h_x`` and
    ``h_t * max(1, t)``).  For each ``k < m`` the time derivative
    ``d^k u/dt^k`` is measured at ``init_times`` (forward differences for
    ``k = 1``) and compared with ``phi_k``; the deviation's empirical order in
    ``t`` and a Richardson extrapolation to ``t = 0`` are reported.  Odd
    ``x_j`` derivatives at ``x_j = 0`` are taken with symmetric stencils.
    """
    start = time.perf_counter()
    ev = evaluator.with_quadrature(evaluator.quadrature.with_rtol(min(evaluator.quadrature.rtol, 1e-11)))
    problem = ev.problem
    n, m = problem.n, problem.m
    if m > 2:
        raise ValueError("residual verification supports m <= 2")
    gammas = problem.gamma.gamma
    probes = probes if probes is not None else _default_probes(n)
    for x, t in probes:
        if t <= 0 or any(v <= 0 for v in x):
            raise ValueError("PDE probes must lie strictly inside the domain")

    u = lambda x, t: ev.eval_u(x, t)
    op = u
    for _ in range(m):
        op = _heat_operator(op, gammas, h_x, h_t)
    src = problem.source
    pde = []
    for x, t in probes:
        f = float(src(np.array(x), t)) if src is not None and ev.mode != "homogeneous" else 0.0
        pde.append(float(op(np.array(x, dtype=float), t) - f))

    initial = []
    times = sorted(init_times, reverse=True)
    for k in range(m):
        phi = problem.phis[k]
        rows = []
        for xv in init_x:
            x = np.full(n, float(xv))
            target = float(phi.evaluate(x))
            vals = []
            for t in times:
                if k == 0:
                    vals.append(u(x, t))
                else:
                    h = 0.1 * t
                    vals.append((-3 * u(x, t) + 4 * u(x, t + h) - u(x, t + 2 * h)) / (2 * h))
            dev = [abs(v - target) for v in vals]
            extrap = vals[-1] - times[-1] * (vals[-2] - vals[-1]) / (times[-2] - times[-1])
            rows.append({"x": float(xv), "values": vals, "deviation": dev, "extrapolated_error": abs(extrap - target)})
        maxdev = [max(r["deviation"][i] for r in rows) for i in range(len(times))]
        orders = [
            math.log(maxdev[i] / maxdev[i + 1]) / math.log(times[i] / times[i + 1]) if maxdev[i + 1] > 0 and maxdev[i] > 0 else float("nan")
            for i in range(len(times) - 1)
        ]
        initial.append({
            "order_k": k,
            "times": list(times),
            "max_deviation": maxdev,
            "empirical_order": orders,
            "max_extrapolated_error": max(r["extrapolated_error"] for r in rows),
            "points": rows,
        })

    boundary = []
    bt = [p[1] for p in probes[:: max(1, len(probes) // 3)]]
    for t in sorted(set(bt)):
        for k in range(n):
            x = np.full(n, 0.7)
            x[k] = 0.0
            for order, w in ((1, _T1), (3, np.array([-1.0, 2.0, 0.0, -2.0, 1.0]) / 2.0)):
                vals = []
                for o in _OFFS:
                    y = x.copy()
                    y[k] = o * h_x
                    vals.append(u(y, t))
                d = float(np.dot(w, vals)) / h_x**order
                boundary.append({"t": t, "axis": k, "order": order, "value": d})

    res = np.abs(np.array(pde))
    summary = {
        "pde_max": float(res.max()) if res.size else 0.0,
        "pde_rms": float(np.sqrt(np.mean(res**2))) if res.size else 0.0,
        "boundary_max": max((abs(b["value"]) for b in boundary), default=0.0),
        "initial_max_deviation": [blk["max_deviation"][-1] for blk in initial],
        "initial_orders": [blk["empirical_order"] for blk in initial],
    }
    runtime = {"seconds": time.perf_counter() - start, "probes": len(probes)}
    return ResidualReport([(list(map(float, x)), float(t)) for x, t in probes], pde, initial, boundary, summary, runtime)


# --------------------------------------------------------------------------
# transmutation route


def transmutation_solution(gamma: float, phi0: ScalarField, t: float, spec: QuadSpec | None = None, s_max: float | None = None):
    """``u(., t)`` for ``n = m = 1`` through the classical even heat equation.

    ``Phi_0 = J^{-1} phi_0`` with ``J = J(gamma + 1/2; -1/2)`` is convolved
    with the reflected Gaussian ``g0`` to give ``U(., t)``, and ``J U`` is
    returned as a callable of ``x > 0``.
    """
    spec = spec or QuadSpec(rtol=1e-12)
    if phi0.n != 1:
        raise ValueError("the transmutation route is implemented for n = 1")
    params = EKParams((gamma + 0.5,), (-0.5,))
    inv = EKField(params, phi0, spec, inverse=True)
    reach = 12.0 * math.sqrt(t) + 8.0 if s_max is None else s_max
    s, w, _ = panel_rule(0.0, reach, 0.25 * min(1.0, math.sqrt(t)))
    phi_big = np.asarray(inv.evaluate(s[:, None]), dtype=float)
    weights = w * phi_big

    def heat(y):
        y = np.asarray(y, dtype=float)
        flat = y.reshape(-1)
        vals = g0(flat[:, None], s[None, :], t) @ weights
        return vals.reshape(y.shape[:-1])

    big_u = CallableField(heat, n=1, name="classical even heat solution")
    forward = EKField(params, big_u, spec)

    def u(x):
        x = np.atleast_1d(np.asarray(x, dtype=float))
        return forward.evaluate(x[:, None])

    return u

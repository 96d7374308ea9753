"""Bessel differential operators applied pointwise to scalar fields.

``B_g = d^2/dx^2 + (2g+1)/x d/dx`` acts along one axis; ``Delta_B`` is the sum
over axes.  Powers are expanded into linear combinations of
``x^{-m} d^j f`` terms, so only the field's own derivatives are needed.  Close
to a coordinate plane ``x_k = 0`` that expansion cancels badly, so the even
Taylor series about the plane is summed instead (at ``x_k = 0`` it reduces to
the even-limit value).
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field as dc_field
from functools import lru_cache
from typing import Sequence

import numpy as np

from .fields import ScalarField, Source, as_points, linear_combination

__all__ = [
    "GammaVec",
    "ProblemSpec",
    "ValidationReport",
    "bessel_terms",
    "apply_B",
    "apply_B_pow",
    "apply_bessel_product",
    "apply_DeltaB_pow",
    "BesselPowerField",
    "DeltaBPowerField",
    "assemble_fk",
    "assemble_fk_alternate",
    "validate_initial_data",
]


@dataclass(frozen=True)
class GammaVec:
    """Singularity exponents; ``strict`` additionally demands ``|gamma_k| < 1/2``."""

    gamma: tuple[float, ...]
    strict: bool = True

    def __post_init__(self):
        g = tuple(float(v) for v in np.atleast_1d(self.gamma))
        object.__setattr__(self, "gamma", g)
        if not g:
            raise ValueError("gamma must have at least one entry")
        if any(not v > -0.5 for v in g):
            raise ValueError(f"gamma entries must exceed -1/2, got {g}")
        if self.strict and any(abs(v) >= 0.5 for v in g):
            raise ValueError(f"solution formula needs |gamma_k| < 1/2, got {g}")

    @property
    def n(self) -> int:
        return len(self.gamma)

    @property
    def alpha(self) -> tuple[float, ...]:
        """EK orders ``gamma_k + 1/2`` of the transmutation."""
        return tuple(g + 0.5 for g in self.gamma)


@dataclass(frozen=True)
class ProblemSpec:
    """Cauchy data for ``(d/dt - Delta_B)^m u = f`` on the positive orthant."""

    gamma: GammaVec
    phis: tuple[ScalarField, ...]
    source: Source | None = None

    def __post_init__(self):
        if not isinstance(self.gamma, GammaVec):
            object.__setattr__(self, "gamma", GammaVec(self.gamma))
        object.__setattr__(self, "phis", tuple(self.phis))
        if not 1 <= self.m <= 3:
            raise ValueError(f"order m must be 1, 2 or 3, got {self.m}")
        for phi in self.phis:
            if phi.n != self.n:
                raise ValueError("initial field dimension does not match gamma")
            if not phi.even:
                raise ValueError(f"initial field {phi.name} must be even in every axis")
        if self.source is not None:
            if self.source.n != self.n:
                raise ValueError("source dimension does not match gamma")
            if not self.source.even:
                raise ValueError("source must be even in every axis")

    @property
    def n(self) -> int:
        return self.gamma.n

    @property
    def m(self) -> int:
        return len(self.phis)


# --------------------------------------------------------------------------
# operator expansion


@lru_cache(maxsize=None)
def bessel_terms(gamma: float, power: int, extra: int = 0) -> tuple[tuple[float, int, int], ...]:
    """Expand ``d^extra B_gamma^power`` as ``sum coef * x^(-m) * f^(j)``.

    Returns ``(coef, m, j)`` triples.
    """
    c = 2.0 * gamma + 1.0
    terms = {(0, 0): 1.0}

    def deriv(tm):
        out = {}
        for (m, j), a in tm.items():
            if m:
                out[(m + 1, j)] = out.get((m + 1, j), 0.0) - m * a
            out[(m, j + 1)] = out.get((m, j + 1), 0.0) + a
        return out

    for _ in range(power):
        d1 = deriv(terms)
        d2 = deriv(d1)
        for (m, j), a in d1.items():
            d2[(m + 1, j)] = d2.get((m + 1, j), 0.0) + c * a
        terms = d2
    for _ in range(extra):
        terms = deriv(terms)
    return tuple((a, m, j) for (m, j), a in sorted(terms.items()) if a != 0.0)


# below ~1e-300 the x^(-m) factors overflow; the Taylor branch covers that range
_TAYLOR_TERMS_MAX = 10
_TAYLOR_RTOL = 1e-16


def _leading(power: int, extra: int) -> int:
    # lowest Taylor index J whose x^(2J) term survives d^extra B^power
    return power + (extra + 1) // 2


def _taylor_plan(power: int, extra: int, available: int) -> tuple[int, float]:
    """Number of extra Taylor terms ``K`` and crossover ``x_c`` for one axis.

    Near the axis the ``x^(-m)`` expansion cancels catastrophically (for
    ``B^3`` already at ``x ~ 1e-4``).  Below ``x_c`` the even Taylor series
    about ``x = 0`` is summed instead; ``x_c`` keeps the first neglected term,
    of relative size ``x^(2K+2)``, below rounding.  ``available`` is the
    highest exact derivative order of the field.
    """
    k = max(0, min(_TAYLOR_TERMS_MAX, available // 2 - _leading(power, extra)))
    return k, min(0.05, _TAYLOR_RTOL ** (1.0 / (2 * k + 2)))


def _taylor_terms(gamma: float, power: int, extra: int, n_terms: int):
    # d^extra B^power x^(2J) = coef * x^(2J - 2 power - extra)
    out = []
    j0 = _leading(power, extra)
    for big_j in range(j0, j0 + n_terms + 1):
        q = 2 * big_j - 2 * power
        coef = 1.0 / math.factorial(2 * big_j)
        for i in range(power):
            coef *= (2 * big_j - 2 * i) * (2 * big_j - 2 * i + 2 * gamma)
        coef *= math.factorial(q) / math.factorial(q - extra)
        out.append((2 * big_j, coef, q - extra))
    return out


def _axis_coefficients(gamma: float, power: int, extra: int, xk: np.ndarray, available: int | None) -> dict[tuple[int, bool], np.ndarray]:
    """Coefficients ``c`` with ``d^extra B^power f = sum c[(j, z)] f^(j)``.

    ``z`` marks derivatives taken on the axis (``x_k = 0``) rather than at
    ``x_k`` itself; those carry the near-axis Taylor expansion, which needs an
    even field (``available=None`` disables it).
    """
    if power == 0:
        return {(extra, False): np.ones_like(xk)}
    if available is None:
        n_terms, x_c = 0, 0.0
    else:
        n_terms, x_c = _taylor_plan(power, extra, available)
    near = xk < x_c
    safe = np.where(near, 1.0, xk)
    coeffs: dict[tuple[int, bool], np.ndarray] = {}
    for a, m, j in bessel_terms(gamma, power, extra):
        val = a * safe ** (-m)
        coeffs[(j, False)] = coeffs.get((j, False), 0.0) + np.where(near, 0.0, val)
    if np.any(near):
        for j, coef, q in _taylor_terms(gamma, power, extra, n_terms):
            coeffs[(j, True)] = np.where(near, coef * xk**q, 0.0)
    return coeffs


def apply_bessel_product(gammas: Sequence[float], field: ScalarField, powers: Sequence[int], point, extra: Sequence[int] | None = None, _cache=None) -> np.ndarray:
    """``prod_k d_k^{extra_k} B_{gamma_k}^{powers_k} f`` evaluated at ``point``."""
    x = as_points(point, field.n)
    n = field.n
    extra = tuple(extra) if extra is not None else (0,) * n
    if np.any(x < 0):
        raise ValueError("points must lie in the closed positive orthant")
    if not field.even:
        for k in range(n):
            if powers[k] and np.any(x[..., k] == 0):
                raise ValueError(f"field {field.name} is not declared even; cannot apply B on x_{k + 1} = 0")
    avail = field.derivative_order if field.even else None
    per_axis = [_axis_coefficients(gammas[k], powers[k], extra[k], x[..., k], avail) for k in range(n)]
    cache = _cache if _cache is not None else {}
    out = np.zeros(x.shape[:-1])
    for combo in itertools.product(*(sorted(c.items()) for c in per_axis)):
        key = tuple(jz for jz, _ in combo)
        coef = 1.0
        for _, a in combo:
            coef = coef * a
        if not np.any(coef):
            continue
        if key not in cache:
            y = x.copy()
            for k, (_, on_axis) in enumerate(key):
                if on_axis:
                    y[..., k] = 0.0
            cache[key] = field.derive(tuple(j for j, _ in key), y)
        out = out + coef * cache[key]
    return out


def apply_B(gamma_k: float, field: ScalarField, axis: int, point) -> np.ndarray:
    """``B_{gamma_k}`` along ``axis`` (0-based) at ``point``.

    On ``x_axis = 0`` returns ``(2 gamma_k + 2) f''`` (even-limit value).
    """
    return apply_B_pow(gamma_k, field, axis, 1, point)


def apply_B_pow(gamma_k: float, field: ScalarField, axis: int, power: int, point, extra: Sequence[int] | None = None) -> np.ndarray:
    powers = [0] * field.n
    powers[axis] = power
    gammas = [gamma_k] * field.n
    return apply_bessel_product(gammas, field, powers, point, extra)


def _multinomial(p: int, n: int):
    for combo in itertools.product(range(p + 1), repeat=n):
        if sum(combo) == p:
            c = math.factorial(p)
            for mk in combo:
                c //= math.factorial(mk)
            yield c, combo


def apply_DeltaB_pow(gamma, field: ScalarField, p: int, point, extra: Sequence[int] | None = None) -> np.ndarray:
    """``Delta_B^p f`` (optionally followed by the mixed derivative ``extra``).

    The multinomial expansion of ``(sum_k B_k)^p`` is applied term by term
    with the field's mixed analytic derivatives.
    """
    gammas = gamma.gamma if isinstance(gamma, GammaVec) else tuple(np.atleast_1d(gamma))
    if len(gammas) != field.n:
        raise ValueError("gamma and field dimension differ")
    if p < 0:
        raise ValueError("power must be non-negative")
    x = as_points(point, field.n)
    if p == 0 and not (extra and any(extra)):
        return field.evaluate(x)
    cache: dict = {}
    out = np.zeros(x.shape[:-1])
    for c, powers in _multinomial(p, field.n):
        out = out + c * apply_bessel_product(gammas, field, powers, x, extra, _cache=cache)
    return out


class BesselPowerField(ScalarField):
    """The field ``prod_k B_{gamma_k}^{powers_k} f`` with exact derivatives."""

    def __init__(self, field: ScalarField, gammas: Sequence[float], powers: Sequence[int]):
        self.base = field
        self.gammas = tuple(float(g) for g in gammas)
        self.powers = tuple(int(p) for p in powers)
        self.n = field.n
        self.even = field.even
        self.derivative_order = max(0, field.derivative_order - 2 * max(self.powers))
        self.name = f"B^{self.powers}[{field.name}]"

    def evaluate(self, x):
        return apply_bessel_product(self.gammas, self.base, self.powers, x)

    def _derive(self, orders, x):
        return apply_bessel_product(self.gammas, self.base, self.powers, x, orders)


class DeltaBPowerField(ScalarField):
    """The field ``Delta_B^p f``."""

    def __init__(self, field: ScalarField, gammas: Sequence[float], p: int):
        self.base = field
        self.gammas = tuple(float(g) for g in gammas)
        self.p = int(p)
        self.n = field.n
        self.even = field.even
        self.derivative_order = max(0, field.derivative_order - 2 * self.p)
        self.name = f"DeltaB^{p}[{field.name}]"

    def evaluate(self, x):
        return apply_DeltaB_pow(self.gammas, self.base, self.p, x)

    def _derive(self, orders, x):
        return apply_DeltaB_pow(self.gammas, self.base, self.p, x, orders)


# --------------------------------------------------------------------------
# initial data


def assemble_fk(problem: ProblemSpec, k: int) -> ScalarField:
    """``f_k = sum_j (-1)^j C(k,j) Delta_B^j phi_{k-j}``."""
    if not 0 <= k < problem.m:
        raise ValueError(f"k must lie in [0, {problem.m - 1}]")
    g = problem.gamma.gamma
    parts, coeffs = [], []
    for j in range(k + 1):
        phi = problem.phis[k - j]
        parts.append(phi if j == 0 else DeltaBPowerField(phi, g, j))
        coeffs.append((-1) ** j * math.comb(k, j))
    if len(parts) == 1:
        return parts[0]
    return linear_combination(parts, coeffs)


def assemble_fk_alternate(problem: ProblemSpec, k: int) -> ScalarField:
    """The other indexing ``sum_j (-1)^j C(k,j) Delta_B^{k-j} phi_j``.

    Equals ``(-1)^k * assemble_fk(problem, k)``; kept for cross-checking.
    """
    g = problem.gamma.gamma
    parts, coeffs = [], []
    for j in range(k + 1):
        phi = problem.phis[j]
        parts.append(phi if j == k else DeltaBPowerField(phi, g, k - j))
        coeffs.append((-1) ** j * math.comb(k, j))
    if len(parts) == 1:
        return parts[0]
    return linear_combination(parts, coeffs)


@dataclass
class ValidationReport:
    """Outcome of :func:`validate_initial_data`; never raises."""

    passed: bool = True
    violations: list[dict] = dc_field(default_factory=list)
    limit_checks: list[dict] = dc_field(default_factory=list)
    notes: list[str] = dc_field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "passed": self.passed,
            "violations": self.violations,
            "limit_checks": self.limit_checks,
            "notes": self.notes,
        }


_PLANE_SAMPLES = (0.0, 0.5, 1.0, 2.0)
_LIMIT_POINTS = (1e-2, 1e-3, 1e-4)


def _scale(phi: ScalarField) -> float:
    grid = np.linspace(0.0, 4.0, 17)
    pts = np.array(list(itertools.product(grid, repeat=phi.n)))
    return max(1.0, float(np.max(np.abs(phi.evaluate(pts)))))


def validate_initial_data(problem: ProblemSpec, rtol: float = 1e-6) -> ValidationReport:
    """Check the vanishing-derivative hypotheses on the initial data.

    For every ``phi_j`` and axis ``k``, derivatives of order
    ``1 .. 2(m-j)-1`` across ``x_k = 0`` must vanish to ``rtol * scale`` with
    ``scale = max(1, sup |phi_j|)`` over ``[0, 4]^n``.  The limits
    ``x_k^(2 alpha_k) d_k B^l phi_j`` are also sampled at
    ``x_k = 1e-2, 1e-3, 1e-4`` and must decay monotonically.
    """
    report = ValidationReport()
    report.notes.append("phi_j(0) itself is not required to vanish; only derivatives of order >= 1 are checked")
    n, m = problem.n, problem.m
    gammas = problem.gamma.gamma
    for j, phi in enumerate(problem.phis):
        scale = _scale(phi)
        top = 2 * (m - j) - 1
        for k in range(n):
            others = list(itertools.product(_PLANE_SAMPLES, repeat=n - 1))
            pts = np.array([o[:k] + (0.0,) + o[k:] for o in others])
            for order in range(1, top + 1):
                orders = [0] * n
                orders[k] = order
                vals = np.abs(phi.derive(orders, pts))
                worst = int(np.argmax(vals))
                if vals[worst] > rtol * scale:
                    report.violations.append({
                        "kind": "derivative",
                        "phi": j,
                        "axis": k,
                        "order": order,
                        "magnitude": float(vals[worst]),
                        "at": [float(v) for v in pts[worst]],
                    })
            base = np.array(others[len(others) // 2][:k] + (0.0,) + others[len(others) // 2][k:]) if n > 1 else np.zeros(1)
            for level in range(m):
                series = []
                for xk in _LIMIT_POINTS:
                    pt = base.copy()
                    pt[k] = xk
                    val = apply_B_pow(gammas[k], phi, k, level, pt, extra=[1 if i == k else 0 for i in range(n)])
                    series.append(float(abs(xk ** (2 * gammas[k] + 1) * val)))
                decays = all(a >= b or b <= 1e-14 * scale for a, b in zip(series, series[1:]))
                entry = {"phi": j, "axis": k, "power": level, "values": series, "decays": decays}
                report.limit_checks.append(entry)
                if not decays:
                    report.violations.append({"kind": "limit", **entry})
    report.passed = not report.violations
    return report

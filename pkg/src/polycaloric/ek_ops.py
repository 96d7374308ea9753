"""Multidimensional Erdelyi-Kober operators and their intertwining checks.

Every per-axis integral ``int_0^x (x^2 - t^2)^{...} t^{...} K(lam sqrt(x^2-t^2)) f dt``
is rewritten with ``t = x sqrt(v)`` as an integral over ``v in [0, 1]`` with
a Jacobi weight ``v^a (1-v)^b``.  For fields even in each axis the remaining
integrand is smooth in ``v``, so Gauss-Jacobi rules converge geometrically,
and derivatives in ``x`` can be taken under the integral sign.
"""

from __future__ import annotations

import itertools
import math
import warnings
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy import special

from .bessel_diffop import (
    BesselPowerField,
    DeltaBPowerField,
    apply_B_pow,
    apply_DeltaB_pow,
)
from .fields import PrecisionWarning, ScalarField, as_points
from .numerics import (
    QuadratureError,
    QuadSpec,
    bessel_clifford_i,
    bessel_clifford_j,
    gamma_fn,
    gauss_jacobi,
    JACOBI_SIZES,
)

__all__ = [
    "EKParams",
    "EKField",
    "ek_apply",
    "ek_inverse_plain",
    "ek_inverse_generalized",
    "intertwine_residual",
    "intertwine_sum_residual",
    "inverse_intertwine_residual",
]

# Largest tensor grid (points x nodes) evaluated in one block.
_BLOCK = 1 << 21


@dataclass(frozen=True)
class EKParams:
    """Orders ``alpha``, weights ``eta`` and Bessel parameters ``lam`` per axis."""

    alpha: tuple[float, ...]
    eta: tuple[float, ...]
    lam: tuple[float, ...] | None = None

    def __post_init__(self):
        alpha = tuple(float(a) for a in np.atleast_1d(self.alpha))
        eta = tuple(float(e) for e in np.atleast_1d(self.eta))
        lam = tuple(float(v) for v in np.atleast_1d(self.lam)) if self.lam is not None else (0.0,) * len(alpha)
        object.__setattr__(self, "alpha", alpha)
        object.__setattr__(self, "eta", eta)
        object.__setattr__(self, "lam", lam)
        if not 1 <= len(alpha) <= 3:
            raise ValueError("EK operators are supported for 1 <= n <= 3")
        if not len(alpha) == len(eta) == len(lam):
            raise ValueError("alpha, eta and lam must have the same length")
        if any(not a > 0 for a in alpha):
            raise ValueError(f"alpha entries must be positive, got {alpha}")
        if any(e < -0.5 for e in eta):
            raise ValueError(f"eta entries must be >= -1/2, got {eta}")
        if any(v < 0 for v in lam):
            raise ValueError(f"lam entries must be non-negative, got {lam}")

    @property
    def n(self) -> int:
        return len(self.alpha)

    @property
    def plain(self) -> bool:
        return not any(self.lam)

    def require_invertible(self):
        if any(not 0 < a < 1 for a in self.alpha):
            raise ValueError(f"inverse operators need 0 < alpha_k < 1, got {self.alpha}")


@dataclass(frozen=True)
class _Axis:
    a: float  # v exponent
    b: float  # (1 - v) exponent
    nu: float  # Bessel-Clifford order of the kernel
    sign: float  # -1 for Jbar, +1 for Ibar
    lam: float


def _kernel_value(nu, w, sign):
    z = np.sqrt(np.maximum(w, 0.0))
    if sign < 0:
        return bessel_clifford_j(nu, z)
    return bessel_clifford_i(nu, z)


def _kernel_derivative(ax: _Axis, r: int, xk, v):
    """``d^r/dx^r`` of ``F(a x^2)`` with ``F(w) = Kbar_nu(sqrt(w))``, ``a = lam^2 (1-v)``."""
    if ax.lam == 0.0:
        return np.ones(np.broadcast(xk, v).shape) if r == 0 else np.zeros(np.broadcast(xk, v).shape)
    a = ax.lam**2 * (1.0 - v)
    w = a * xk * xk
    out = 0.0
    for i in range(r // 2 + 1):
        s = r - i
        # F^(s)(w) = (sign/4)^s / (nu+1)_s * F_{nu+s}(w)
        fs = (ax.sign / 4.0) ** s / special.poch(ax.nu + 1.0, s) * _kernel_value(ax.nu + s, w, ax.sign)
        c = math.factorial(r) / (math.factorial(i) * math.factorial(r - 2 * i))
        out = out + c * (2.0 * a * xk) ** (r - 2 * i) * a**i * fs
    return out


def _integral_derivative(axes: Sequence[_Axis], field: ScalarField, x: np.ndarray, orders: Sequence[int], npts: int) -> np.ndarray:
    """``d^orders`` of ``int_{[0,1]^n} prod_k v_k^a (1-v_k)^b K_k f(x * sqrt(v)) dv`` at a fixed rule."""
    n = len(axes)
    rules = [gauss_jacobi(npts, 0.0, 1.0, ax.a, ax.b) for ax in axes]
    out = np.zeros(x.shape[0])
    # broadcast shape (P, N_1, ..., N_n)
    def along(k, arr):
        shape = [1] * (n + 1)
        shape[k + 1] = arr.shape[-1]
        if arr.ndim == 2:
            shape[0] = arr.shape[0]
        return arr.reshape(shape)

    roots = [np.sqrt(v) for v, _ in rules]
    y = np.empty((x.shape[0],) + tuple(npts for _ in range(n)) + (n,))
    for k in range(n):
        y[..., k] = along(k, x[:, k : k + 1] * roots[k][None, :])
    wgrid = 1.0
    for k in range(n):
        wgrid = wgrid * along(k, rules[k][1])
    cache = {}
    for r in itertools.product(*(range(q + 1) for q in orders)):
        coef = wgrid
        for k, ax in enumerate(axes):
            q, rk = orders[k], r[k]
            kd = _kernel_derivative(ax, rk, x[:, k : k + 1], rules[k][0][None, :])
            if not np.any(kd):
                coef = None
                break
            factor = math.comb(q, rk) * kd * roots[k][None, :] ** (q - rk)
            coef = coef * along(k, factor)
        if coef is None:
            continue
        rest = tuple(q - rk for q, rk in zip(orders, r))
        if rest not in cache:
            cache[rest] = field.derive(rest, y)
        out = out + np.sum(coef * cache[rest], axis=tuple(range(1, n + 1)))
    return out


def _converged_integral(axes, field, x, orders, spec: QuadSpec) -> np.ndarray:
    n = len(axes)
    prev = None
    err = np.inf
    for level in range(min(spec.max_level, len(JACOBI_SIZES) - 1) + 1):
        npts = JACOBI_SIZES[level]
        block = max(1, _BLOCK // npts**n)
        est = np.concatenate([
            _integral_derivative(axes, field, x[i : i + block], orders, npts)
            for i in range(0, x.shape[0], block)
        ])
        if prev is not None:
            err = np.abs(est - prev)
            floor = 1e-15 * max(1.0, float(np.max(np.abs(est))))
            if np.all(err <= spec.rtol * np.abs(est) + floor):
                return est
        prev = est
    worst = int(np.argmax(err))
    raise QuadratureError("EK integral did not converge", float(prev[worst]), float(err[worst]))


class EKField(ScalarField):
    """``J_lam(alpha; eta) f`` (or its inverse) as a field with exact derivatives.

    Forward: ``prod_k 1/Gamma(alpha_k) int v^eta (1-v)^(alpha-1) Jbar_{alpha-1}(...) f``.
    Inverse (``0 < alpha_k < 1``): ``prod_k [(2 eta_k + 2) + x_k d_k] / Gamma(1-alpha_k)``
    applied to ``int 1/2 v^(eta+alpha) (1-v)^(-alpha) Ibar_{-alpha}(...) f``.
    """

    def __init__(self, params: EKParams, field: ScalarField, spec: QuadSpec | None = None, inverse: bool = False):
        if field.n != params.n:
            raise ValueError("field and operator dimensions differ")
        if inverse:
            params.require_invertible()
        self.params = params
        self.base = field
        self.spec = spec or QuadSpec()
        self.inverse = inverse
        self.n = params.n
        self.even = field.even
        self.derivative_order = max(0, field.derivative_order - (1 if inverse else 0))
        self.name = f"{'EKinv' if inverse else 'EK'}[{field.name}]"
        if inverse:
            self._axes = [_Axis(e + a, -a, -a, 1.0, lam) for a, e, lam in zip(params.alpha, params.eta, params.lam)]
            self._norm = math.prod(0.5 / gamma_fn(1.0 - a) for a in params.alpha)
        else:
            self._axes = [_Axis(e, a - 1.0, a - 1.0, -1.0, lam) for a, e, lam in zip(params.alpha, params.eta, params.lam)]
            self._norm = math.prod(1.0 / gamma_fn(a) for a in params.alpha)

    def evaluate(self, x):
        return self._derive((0,) * self.n, as_points(x, self.n))

    def _integral(self, orders, flat):
        return _converged_integral(self._axes, self.base, flat, orders, self.spec)

    def _derive(self, orders, x):
        if np.any(x < 0):
            raise ValueError("EK operators act on the closed positive orthant")
        flat = x.reshape(-1, self.n)
        if not self.inverse:
            out = self._norm * self._integral(orders, flat)
            return out.reshape(x.shape[:-1])
        out = np.zeros(flat.shape[0])
        numeric = self.base.derivative_order < max(orders) + 1
        if numeric:
            warnings.warn(f"{self.name}: inverse EK by numeric differentiation", PrecisionWarning, stacklevel=3)
        for bump in itertools.product((0, 1), repeat=self.n):
            coef = np.ones(flat.shape[0])
            for k, b in enumerate(bump):
                coef = coef * (flat[:, k] if b else 2.0 * self.params.eta[k] + 2.0 + orders[k])
            q = tuple(o + b for o, b in zip(orders, bump))
            if numeric:
                term = self._numeric_integral(orders, bump, flat)
            else:
                term = self._integral(q, flat)
            out = out + coef * term
        return (self._norm * out).reshape(x.shape[:-1])

    def _numeric_integral(self, orders, bump, flat):
        # central differences of the smooth parameterized integral, h = 1e-5 max(1, x)
        h = 1e-5 * np.maximum(1.0, flat)
        axes = [k for k, b in enumerate(bump) if b]
        out = np.zeros(flat.shape[0])
        for signs in itertools.product((-1.0, 1.0), repeat=len(axes)):
            shifted = flat.copy()
            for k, s in zip(axes, signs):
                shifted[:, k] = np.abs(shifted[:, k] + s * h[:, k])
            out = out + math.prod(signs) * self._integral(orders, shifted)
        denom = np.prod([2.0 * h[:, k] for k in axes], axis=0) if axes else 1.0
        return out / denom


def _point(point, n):
    x = as_points(point, n)
    if np.any(x <= 0):
        raise ValueError("EK operators are evaluated at points with every coordinate > 0")
    return x


def _scalar(v):
    v = np.asarray(v)
    return float(v) if v.ndim == 0 or v.size == 1 else v


def ek_apply(params: EKParams, field: ScalarField, point, spec: QuadSpec | None = None):
    """Generalized EK operator ``J_lam(alpha; eta) f`` at ``point``.

    With every ``lam_k = 0`` this is the plain operator.
    """
    return _scalar(EKField(params, field, spec).evaluate(_point(point, params.n)))


def ek_inverse_generalized(params: EKParams, field: ScalarField, point, spec: QuadSpec | None = None):
    """Inverse ``J_lam^{-1}(alpha; eta) f`` for ``0 < alpha_k < 1`` (kernel ``Ibar_{-alpha}``)."""
    return _scalar(EKField(params, field, spec, inverse=True).evaluate(_point(point, params.n)))


def ek_inverse_plain(params: EKParams, field: ScalarField, point, spec: QuadSpec | None = None):
    """Inverse of the plain operator; ``params.lam`` must vanish."""
    if not params.plain:
        raise ValueError("ek_inverse_plain needs lam = 0")
    return ek_inverse_generalized(params, field, point, spec)


def intertwine_residual(params: EKParams, field: ScalarField, axis: int, power: int, point, spec: QuadSpec | None = None):
    """``[B_{eta_k+alpha_k} + lam_k^2]^p J f - J [B_{eta_k}]^p f`` along ``axis`` (0-based)."""
    if power < 1:
        raise ValueError("power must be >= 1")
    x = _point(point, params.n)
    g = EKField(params, field, spec)
    lam2 = params.lam[axis] ** 2
    gamma_out = params.eta[axis] + params.alpha[axis]
    lhs = 0.0
    for j in range(power + 1):
        c = math.comb(power, j) * lam2 ** (power - j)
        if c:
            lhs = lhs + c * apply_B_pow(gamma_out, g, axis, j, x)
    powers = [0] * params.n
    powers[axis] = power
    rhs = EKField(params, BesselPowerField(field, params.eta, powers), spec).evaluate(x)
    return _scalar(lhs - rhs)


def intertwine_sum_residual(params: EKParams, field: ScalarField, q: int, point, spec: QuadSpec | None = None):
    """``[sum_k (B_{eta_k+alpha_k} + lam_k^2)]^q J f - J [sum_k B_{eta_k}]^q f``."""
    if q < 1:
        raise ValueError("q must be >= 1")
    x = _point(point, params.n)
    g = EKField(params, field, spec)
    total_lam2 = sum(v * v for v in params.lam)
    gamma_out = [e + a for e, a in zip(params.eta, params.alpha)]
    lhs = 0.0
    for j in range(q + 1):
        c = math.comb(q, j) * total_lam2 ** (q - j)
        if c:
            lhs = lhs + c * apply_DeltaB_pow(gamma_out, g, j, x)
    rhs = EKField(params, DeltaBPowerField(field, params.eta, q), spec).evaluate(x)
    return _scalar(lhs - rhs)


def inverse_intertwine_residual(params: EKParams, field: ScalarField, p: int, point, spec: QuadSpec | None = None):
    """``[sum_k (B_{eta_k} - lam_k^2)]^p J^{-1} g - J^{-1} [sum_k B_{eta_k+alpha_k}]^p g``.

    With ``eta = -1/2`` and ``lam = 0`` the left operator is the plain
    Laplacian power.
    """
    if p < 1:
        raise ValueError("p must be >= 1")
    params.require_invertible()
    x = _point(point, params.n)
    ginv = EKField(params, field, spec, inverse=True)
    total_lam2 = sum(v * v for v in params.lam)
    lhs = 0.0
    for j in range(p + 1):
        c = math.comb(p, j) * (-total_lam2) ** (p - j)
        if c:
            lhs = lhs + c * apply_DeltaB_pow(params.eta, ginv, j, x)
    gamma_in = [e + a for e, a in zip(params.eta, params.alpha)]
    rhs = EKField(params, DeltaBPowerField(field, gamma_in, p), spec, inverse=True).evaluate(x)
    return _scalar(lhs - rhs)

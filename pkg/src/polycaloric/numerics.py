"""Special functions and quadrature rules shared by the rest of the package.

Everything here is a pure function of its arguments.  Quadrature node tables
are cached, but the cached arrays are read-only so concurrent callers cannot
corrupt them.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy import special

__all__ = [
    "QuadSpec",
    "QuadratureError",
    "gamma_fn",
    "bessel_i_scaled",
    "bessel_j",
    "bessel_clifford_i",
    "bessel_clifford_i_scaled",
    "bessel_clifford_j",
    "clifford_series",
    "gauss_jacobi",
    "JACOBI_SIZES",
    "central_weights",
    "integrate_finite",
    "gaussian_tail_rule",
    "gaussian_line_rule",
    "panel_rule",
    "integrate_gaussian_tail",
]

# Bessel-Clifford functions switch from the z^2/4 power series to the
# scipy Bessel routines above this argument.
_SERIES_CUTOFF = 4.0
_SERIES_TERMS = 40


class QuadratureError(ArithmeticError):
    """Raised when a quadrature rule fails to reach its tolerance."""

    def __init__(self, message: str, estimate: float, error: float):
        super().__init__(f"{message} (estimate={estimate!r}, error={error!r})")
        self.estimate = estimate
        self.error = error


@dataclass(frozen=True)
class QuadSpec:
    """Tolerance and refinement budget for one family of quadrature rules.

    ``kind`` is ``"finite"`` (Gauss-Jacobi on a bounded interval) or
    ``"gaussian_tail"`` (composite Gauss-Legendre on a truncated half-line).
    ``trunc_c`` and ``margin`` only matter for the Gaussian-tail rule.
    """

    kind: str = "finite"
    rtol: float = 1e-9
    max_level: int = 6
    trunc_c: float = 1.2
    margin: float = 10.0

    def __post_init__(self):
        if self.kind not in ("finite", "gaussian_tail"):
            raise ValueError(f"unknown quadrature kind {self.kind!r}")
        if not self.rtol > 0:
            raise ValueError("rtol must be positive")
        if self.max_level < 1:
            raise ValueError("max_level must be at least 1")

    def with_rtol(self, rtol: float) -> "QuadSpec":
        return QuadSpec(self.kind, rtol, self.max_level, self.trunc_c, self.margin)


# --------------------------------------------------------------------------
# special functions


def gamma_fn(x: float) -> float:
    """Euler's Gamma function for positive real arguments."""
    x = float(x)
    if not x > 0:
        raise ValueError(f"gamma_fn needs x > 0, got {x}")
    return math.gamma(x)


def _check_order(nu):
    if np.any(np.asarray(nu) <= -1):
        raise ValueError(f"Bessel order must exceed -1, got {nu}")


def _check_arg(z):
    z = np.asarray(z, dtype=float)
    if np.any(z < 0) or np.any(np.isnan(z)):
        raise ValueError("Bessel argument must be non-negative")
    return z


def bessel_i_scaled(nu, z):
    """Return ``exp(-z) * I_nu(z)`` for ``nu > -1`` and ``z >= 0``.

    Finite for arbitrarily large ``z``.
    """
    _check_order(nu)
    z = _check_arg(z)
    return special.ive(nu, z)


def bessel_j(nu, z):
    """Bessel function of the first kind ``J_nu(z)`` for real ``z >= 0``."""
    _check_order(nu)
    z = _check_arg(z)
    return special.jv(nu, z)


def clifford_series(nu, w, sign: float = 1.0, terms: int = _SERIES_TERMS):
    """Sum ``sum_k (sign*w/4)^k / (k! (nu+1)_k)``.

    With ``w = z**2`` this is ``Ibar_nu(z)`` (``sign=+1``) or ``Jbar_nu(z)``
    (``sign=-1``).  Only accurate for moderate ``w``.
    """
    w = np.asarray(w, dtype=float)
    nu = np.asarray(nu, dtype=float)
    q = sign * w / 4.0
    term = np.ones(np.broadcast(nu, w).shape)
    total = term.copy()
    for k in range(1, terms + 1):
        term = term * q / (k * (nu + k))
        total = total + term
    return total


def bessel_clifford_i(nu, z):
    r"""Bessel-Clifford function :math:`\bar I_\nu(z) = \Gamma(\nu+1)(z/2)^{-\nu} I_\nu(z)`.

    Uses the power series in ``z**2/4`` near the origin so no ``0**(-nu)``
    is ever formed; ``bessel_clifford_i(nu, 0) == 1`` exactly.
    """
    _check_order(nu)
    z = _check_arg(z)
    nu_b, z_b = np.broadcast_arrays(np.asarray(nu, dtype=float), z)
    out = np.empty(z_b.shape)
    small = z_b <= _SERIES_CUTOFF
    out[small] = clifford_series(nu_b[small], z_b[small] ** 2, 1.0)
    big = ~small
    if np.any(big):
        nb, zb = nu_b[big], z_b[big]
        out[big] = special.gamma(nb + 1) * np.exp(
            zb - nb * np.log(zb / 2) + np.log(special.ive(nb, zb))
        )
    return out[()] if out.ndim == 0 else out


def bessel_clifford_i_scaled(nu, z):
    r"""``exp(-z) * Ibar_nu(z)``; bounded by one for ``nu > -1/2``, never overflows."""
    _check_order(nu)
    z = _check_arg(z)
    nu_b, z_b = np.broadcast_arrays(np.asarray(nu, dtype=float), z)
    out = np.empty(z_b.shape)
    small = z_b <= _SERIES_CUTOFF
    out[small] = np.exp(-z_b[small]) * clifford_series(nu_b[small], z_b[small] ** 2, 1.0)
    big = ~small
    if np.any(big):
        nb, zb = nu_b[big], z_b[big]
        out[big] = special.gamma(nb + 1) * (zb / 2) ** (-nb) * special.ive(nb, zb)
    return out[()] if out.ndim == 0 else out


def bessel_clifford_j(nu, z):
    r"""Bessel-Clifford function :math:`\bar J_\nu(z) = \Gamma(\nu+1)(z/2)^{-\nu} J_\nu(z)`."""
    _check_order(nu)
    z = _check_arg(z)
    nu_b, z_b = np.broadcast_arrays(np.asarray(nu, dtype=float), z)
    out = np.empty(z_b.shape)
    small = z_b <= _SERIES_CUTOFF
    out[small] = clifford_series(nu_b[small], z_b[small] ** 2, -1.0)
    big = ~small
    if np.any(big):
        nb, zb = nu_b[big], z_b[big]
        out[big] = special.gamma(nb + 1) * (zb / 2) ** (-nb) * special.jv(nb, zb)
    return out[()] if out.ndim == 0 else out


# --------------------------------------------------------------------------
# quadrature


# Node counts visited by the refining Gauss-Jacobi rules.  Beyond ~128 nodes
# the Jacobi polynomial evaluations used for polishing lose accuracy.
JACOBI_SIZES = (16, 24, 32, 48, 64, 96, 128)


@lru_cache(maxsize=512)
def _jacobi_table(npts: int, p: float, q: float):
    # weight (1-x)^q (1+x)^p on [-1, 1]; scipy's nodes are polished by Newton
    # steps and the weights rebuilt from the closed form, then renormalised to
    # the exact Beta mass.
    a, b = q, p
    x, _ = special.roots_jacobi(npts, a, b)
    for _ in range(2):
        val = special.eval_jacobi(npts, a, b, x)
        der = 0.5 * (npts + a + b + 1) * special.eval_jacobi(npts - 1, a + 1, b + 1, x)
        x = x - val / der
    der = 0.5 * (npts + a + b + 1) * special.eval_jacobi(npts - 1, a + 1, b + 1, x)
    logc = (
        special.gammaln(npts + a + 1)
        + special.gammaln(npts + b + 1)
        - special.gammaln(npts + a + b + 1)
        - special.gammaln(npts + 1)
        + (a + b + 1) * math.log(2.0)
    )
    w = np.exp(logc) / ((1.0 - x * x) * der * der)
    mass = 2.0 ** (a + b + 1) * math.exp(special.betaln(a + 1, b + 1))
    w *= mass / math.fsum(w)
    x.setflags(write=False)
    w.setflags(write=False)
    return x, w


def gauss_jacobi(npts: int, a: float, b: float, p: float = 0.0, q: float = 0.0):
    """Nodes and weights for ``int_a^b (x-a)^p (b-x)^q g(x) dx``.

    The returned weights already contain the algebraic factor, so the rule is
    applied as ``sum(w * g(x))``.
    """
    if not (p > -1 and q > -1):
        raise ValueError("endpoint exponents must exceed -1")
    xi, wi = _jacobi_table(int(npts), float(p), float(q))
    half = 0.5 * (b - a)
    nodes = a + half * (1.0 + xi)
    weights = wi * half ** (1.0 + p + q)
    return nodes, weights


def integrate_finite(f, a: float, b: float, singular_exponents=(0.0, 0.0), spec: QuadSpec | None = None):
    """Integrate ``(x-a)^p (b-x)^q f(x)`` over ``[a, b]``.

    ``f`` is the smooth factor and must accept a numpy array of nodes; the
    algebraic endpoint factors declared in ``singular_exponents = (p, q)`` are
    absorbed into a Gauss-Jacobi rule.  The node count steps through
    ``JACOBI_SIZES`` until two successive estimates agree to ``spec.rtol``.
    """
    spec = spec or QuadSpec()
    if not a < b:
        raise ValueError("integrate_finite needs a < b")
    p, q = singular_exponents
    prev = None
    err = math.inf
    for level in range(min(spec.max_level, len(JACOBI_SIZES) - 1) + 1):
        x, w = gauss_jacobi(JACOBI_SIZES[level], a, b, p, q)
        est = float(np.dot(w, np.asarray(f(x), dtype=float)))
        if prev is not None:
            err = abs(est - prev)
            if err <= spec.rtol * abs(est) or err <= 1e-300:
                return est
        prev = est
    raise QuadratureError("integrate_finite did not converge", prev, err)


@lru_cache(maxsize=64)
def central_weights(deriv: int, half_width: int) -> np.ndarray:
    """Central finite-difference weights on offsets ``-half_width..half_width`` (unit step).

    Fornberg's recursion; the stencil is exact for polynomials of degree
    ``2*half_width``.
    """
    if half_width * 2 < deriv:
        raise ValueError("stencil too narrow for the derivative order")
    offsets = np.arange(-half_width, half_width + 1, dtype=float)
    npts = offsets.size
    c = np.zeros((npts, deriv + 1))
    c[0, 0] = 1.0
    c1 = 1.0
    for i in range(1, npts):
        c2 = 1.0
        for j in range(i):
            c3 = offsets[i] - offsets[j]
            c2 *= c3
            for k in range(min(i, deriv), -1, -1):
                prev = c[i - 1, k - 1] if k else 0.0
                c[i, k] = c1 * (k * prev - offsets[i - 1] * c[i - 1, k]) / c2
            for k in range(min(i, deriv), -1, -1):
                prev = c[j, k - 1] if k else 0.0
                c[j, k] = (offsets[i] * c[j, k] - k * prev) / c3
        c1 = c2
    out = c[:, deriv].copy()
    out.setflags(write=False)
    return out


@lru_cache(maxsize=64)
def _legendre_table(npts: int):
    x, w = np.polynomial.legendre.leggauss(npts)
    x.setflags(write=False)
    w.setflags(write=False)
    return x, w


_PANEL_NODES = 16


def _reach(t: float, spec: QuadSpec) -> float:
    eps = min(spec.rtol, 1e-3)
    return spec.trunc_c * math.sqrt(4.0 * t * math.log(1.0 / eps)) + spec.margin * math.sqrt(t)


def panel_rule(lo: float, hi: float, width: float):
    """Composite 16-point Gauss-Legendre rule on ``[lo, hi]`` with panels no wider than ``width``."""
    npan = max(1, math.ceil((hi - lo) / width))
    edges = np.linspace(lo, hi, npan + 1)
    gx, gw = _legendre_table(_PANEL_NODES)
    half = 0.5 * np.diff(edges)
    mid = 0.5 * (edges[1:] + edges[:-1])
    nodes = (mid[:, None] + half[:, None] * gx[None, :]).ravel()
    weights = (half[:, None] * gw[None, :]).ravel()
    return nodes, weights, edges


def gaussian_line_rule(t: float, center: float, spec: QuadSpec, level: int = 0):
    """Composite rule on the whole line for integrands concentrated near ``center``."""
    if not t > 0:
        raise ValueError("gaussian line rule needs t > 0")
    reach = _reach(t, spec)
    nodes, weights, _ = panel_rule(center - reach, center + reach, 2.0 * math.sqrt(t) / (1 << level))
    return nodes, weights


def gaussian_tail_rule(t: float, center: float, spec: QuadSpec, origin_exponent: float = 0.0, level: int = 0):
    """Composite rule for ``int_0^inf s^p f(s) ds`` with ``f`` Gaussian-dominated about ``center``.

    The half-line is cut to ``[max(0, c - R), c + R]`` with
    ``R = trunc_c * sqrt(4 t ln(1/eps)) + margin * sqrt(t)`` and split into
    panels of width ``2 sqrt(t) / 2**level``.  A panel touching the origin uses
    Gauss-Jacobi with weight ``s^p``; the others are Gauss-Legendre with
    ``s^p`` folded into the weights.
    """
    if not t > 0:
        raise ValueError("gaussian tail rule needs t > 0")
    if center < 0:
        raise ValueError("center must be non-negative")
    p = float(origin_exponent)
    reach = _reach(t, spec)
    lo = max(0.0, center - reach)
    nodes, weights, edges = panel_rule(lo, center + reach, 2.0 * math.sqrt(t) / (1 << level))
    if lo == 0.0 and p != 0.0:
        jx, jw = gauss_jacobi(_PANEL_NODES, 0.0, edges[1], p, 0.0)
        tail_x = nodes[_PANEL_NODES:]
        tail_w = weights[_PANEL_NODES:] * tail_x**p
        nodes = np.concatenate([jx, tail_x])
        weights = np.concatenate([jw, tail_w])
    elif p != 0.0:
        weights = weights * nodes**p
    return nodes, weights


def integrate_gaussian_tail(f, t: float, center: float = 0.0, spec: QuadSpec | None = None, origin_exponent: float = 0.0):
    """Integrate ``s^p f(s)`` over ``[0, inf)`` for Gaussian-dominated ``f``.

    ``f`` must decay at least like ``exp(-(s-center)^2/(4t))`` times a
    polynomial.  Panels are halved until successive levels agree.
    """
    spec = spec or QuadSpec(kind="gaussian_tail")
    prev = None
    err = math.inf
    for level in range(spec.max_level + 1):
        x, w = gaussian_tail_rule(t, center, spec, origin_exponent, level)
        est = float(np.dot(w, np.asarray(f(x), dtype=float)))
        if prev is not None:
            err = abs(est - prev)
            if err <= spec.rtol * abs(est) or err <= 1e-300:
                return est
        prev = est
    raise QuadratureError("integrate_gaussian_tail did not converge", prev, err)

"""Heat kernels for the Bessel operator and checks of their defining identities.

The per-axis weight

    w(x, s, t) = x^{-g} s^{g+1} exp(-(x^2+s^2)/4t) I_g(xs/2t) / (2t)

is evaluated as

    s^{2g+1} (4t)^{-g} / (2t Gamma(g+1)) * exp(-(x-s)^2/4t) * [exp(-z) Ibar_g(z)],

with ``z = xs/2t``.  Both bracketed factors are bounded by one, so the form is
finite at ``x = 0`` and does not overflow for large ``z``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .bessel_diffop import GammaVec
from .fields import ScalarField, as_points
from .numerics import (
    QuadratureError,
    QuadSpec,
    bessel_clifford_i_scaled,
    bessel_clifford_j,
    bessel_i_scaled,
    gamma_fn,
    gauss_jacobi,
    gaussian_line_rule,
    gaussian_tail_rule,
    panel_rule,
)

__all__ = [
    "KernelWeight",
    "g0",
    "weight",
    "weight_smooth",
    "kernel_mass",
    "weber_sonine_lhs",
    "weber_sonine_rhs",
    "weber_sonine_residual",
    "semigroup_residual",
]


def _check_t(t):
    t = np.asarray(t, dtype=float)
    if np.any(~(t > 0)):
        raise ValueError("kernel time must be positive")
    return t


def g0(x, s, t):
    """Reflected Gaussian ``(e^{-(s-x)^2/4t} + e^{-(s+x)^2/4t}) / (2 sqrt(pi t))``."""
    t = _check_t(t)
    x = np.asarray(x, dtype=float)
    s = np.asarray(s, dtype=float)
    out = (np.exp(-((s - x) ** 2) / (4 * t)) + np.exp(-((s + x) ** 2) / (4 * t))) / (2 * np.sqrt(np.pi * t))
    return out[()] if out.ndim == 0 else out


def weight_smooth(gamma: float, x, s, t):
    """``weight / s^{2 gamma + 1}``: the factor that stays smooth at ``s = 0``.

    Negative ``x`` is accepted and gives the even extension.
    """
    t = _check_t(t)
    gamma = float(gamma)
    if not gamma > -0.5:
        raise ValueError("gamma must exceed -1/2")
    x = np.abs(np.asarray(x, dtype=float))
    s = np.asarray(s, dtype=float)
    if np.any(s < 0):
        raise ValueError("s must be non-negative")
    z = x * s / (2 * t)
    pref = (4 * t) ** (-gamma) / (2 * t * gamma_fn(gamma + 1))
    out = pref * np.exp(-((x - s) ** 2) / (4 * t)) * bessel_clifford_i_scaled(gamma, z)
    return out[()] if np.ndim(out) == 0 else out


def weight(gamma: float, x, s, t):
    """Normalized singular heat-kernel weight; integrates to one in ``s`` over ``[0, inf)``."""
    s = np.asarray(s, dtype=float)
    smooth = weight_smooth(gamma, x, s, t)
    out = s ** (2 * float(gamma) + 1) * smooth
    return out[()] if np.ndim(out) == 0 else out


@dataclass(frozen=True)
class KernelWeight:
    """Product kernel ``prod_j w_j(x_j, s_j, t)`` for a vector of exponents."""

    gamma: GammaVec

    def __post_init__(self):
        if not isinstance(self.gamma, GammaVec):
            object.__setattr__(self, "gamma", GammaVec(self.gamma))

    @property
    def n(self) -> int:
        return self.gamma.n

    def axis(self, j: int, x, s, t):
        return weight(self.gamma.gamma[j], x, s, t)

    def __call__(self, x, s, t):
        x = as_points(x, self.n)
        s = as_points(s, self.n)
        out = 1.0
        for j in range(self.n):
            out = out * self.axis(j, x[..., j], s[..., j], t)
        return out

    def axis_rule(self, j: int, xj: float, t: float, spec: QuadSpec, level: int = 0):
        """Nodes ``s`` and weights ``W`` with ``sum W f(s) ~ int f(s) w_j(xj, s, t) ds``."""
        g = self.gamma.gamma[j]
        nodes, qw = gaussian_tail_rule(t, abs(xj), spec, 2 * g + 1, level)
        return nodes, qw * weight_smooth(g, xj, nodes, t)


def kernel_mass(gamma: float, x: float, t: float, spec: QuadSpec | None = None) -> float:
    """``int_0^inf weight(gamma, x, s, t) ds`` by refined Gaussian-tail quadrature."""
    spec = spec or QuadSpec(kind="gaussian_tail", rtol=1e-13)
    k = KernelWeight(GammaVec((gamma,), strict=False))
    prev = None
    for level in range(spec.max_level + 1):
        _, w = k.axis_rule(0, x, t, spec, level)
        est = float(np.sum(w))
        if prev is not None and abs(est - prev) <= spec.rtol * abs(est):
            return est
        prev = est
    raise QuadratureError("kernel mass did not converge", prev, abs(est - prev))


# --------------------------------------------------------------------------
# Weber-Sonine identity

_WS_EPS = 1e-14
_WS_PANELS_PER_PERIOD = 10


def _ws_rule(nu: float, x: float, s: float, t: float, margin: float, refine: int):
    lam_max = math.sqrt(math.log(1 / _WS_EPS) / t) + margin
    period = 2 * math.pi / max(x, s, 1e-300)
    width = min(period / _WS_PANELS_PER_PERIOD, math.sqrt(1.0 / t)) / (1 << refine)
    nodes, weights, edges = panel_rule(0.0, lam_max, width)
    # the first panel carries lam^(2 nu + 1) as a Jacobi weight
    npan = len(edges) - 1
    per = len(nodes) // npan
    jx, jw = gauss_jacobi(per, 0.0, edges[1], 2 * nu + 1, 0.0)
    tail_x = nodes[per:]
    tail_w = weights[per:] * tail_x ** (2 * nu + 1)
    return np.concatenate([jx, tail_x]), np.concatenate([jw, tail_w])


def weber_sonine_lhs(nu: float, x: float, s: float, t: float, spec: QuadSpec | None = None) -> float:
    """``int_0^inf exp(-t lam^2) J_nu(s lam) J_nu(x lam) lam dlam`` by panel quadrature.

    ``J_nu(s lam) J_nu(x lam) lam`` is rewritten with Bessel-Clifford
    functions so that the only non-smooth factor, ``lam^(2 nu + 1)``, is
    integrated exactly by the first panel.
    """
    spec = spec or QuadSpec(rtol=1e-12)
    if not nu > -0.5:
        raise ValueError("nu must exceed -1/2")
    if not (x > 0 and s > 0 and t > 0):
        raise ValueError("x, s and t must be positive")
    const = (x * s / 4) ** nu / gamma_fn(nu + 1) ** 2
    margin = 2.0

    def estimate(refine):
        lam, w = _ws_rule(nu, x, s, t, margin, refine)
        vals = np.exp(-t * lam**2) * bessel_clifford_j(nu, s * lam) * bessel_clifford_j(nu, x * lam)
        return const * float(np.dot(w, vals))

    prev = estimate(0)
    for refine in range(1, spec.max_level + 1):
        est = estimate(refine)
        err = abs(est - prev)
        if err <= spec.rtol * max(abs(est), 1e-3):
            return est
        prev = est
    raise QuadratureError("Weber-Sonine integral did not converge", prev, err)


def weber_sonine_rhs(nu: float, x: float, s: float, t: float) -> float:
    """``exp(-(x^2+s^2)/4t) I_nu(xs/2t) / (2t)`` via the scaled Bessel function."""
    z = x * s / (2 * t)
    return float(np.exp(-((x - s) ** 2) / (4 * t)) * bessel_i_scaled(nu, z) / (2 * t))


def weber_sonine_residual(nu: float, x: float, s: float, t: float, spec: QuadSpec | None = None) -> float:
    """Quadrature left side minus closed-form right side of the Weber-Sonine integral."""
    return weber_sonine_lhs(nu, x, s, t, spec) - weber_sonine_rhs(nu, x, s, t)


# --------------------------------------------------------------------------
# Chapman-Kolmogorov / semigroup identity


def _heat(d, t):
    return np.exp(-(d**2) / (4 * t)) / (2 * math.sqrt(math.pi * t))


def _contract(values: np.ndarray, vectors: Sequence[np.ndarray]) -> float:
    out = values
    for v in vectors:
        out = np.tensordot(v, out, axes=([0], [0]))
    return float(out)


def _grid_values(g: ScalarField, axes: Sequence[np.ndarray]) -> np.ndarray:
    mesh = np.meshgrid(*axes, indexing="ij")
    pts = np.stack(mesh, axis=-1)
    return np.asarray(g.evaluate(pts), dtype=float)


def _one_step(g: ScalarField, x: np.ndarray, t: float, spec: QuadSpec, level: int) -> float:
    axes, vecs = [], []
    for xk in x:
        nodes, w = gaussian_line_rule(t, xk, spec, level)
        axes.append(nodes)
        vecs.append(w * _heat(xk - nodes, t))
    return _contract(_grid_values(g, axes), vecs)


def _two_step(g: ScalarField, x: np.ndarray, t: float, tau: float, spec: QuadSpec, level: int) -> float:
    # outer average at time t - tau of the inner average at time tau; the
    # inner integral is done on one shared eta grid, so each axis reduces to
    # a matrix-vector product
    sigma = t - tau
    width = 2 * min(math.sqrt(tau), math.sqrt(sigma)) / (1 << level)
    axes, vecs = [], []
    for xk in x:
        y, wy = gaussian_line_rule(sigma, xk, spec, level)
        reach_y = np.max(np.abs(y - xk))
        reach_eta = np.max(np.abs(gaussian_line_rule(tau, 0.0, spec)[0]))
        eta, weta, _ = panel_rule(xk - reach_y - reach_eta, xk + reach_y + reach_eta, width)
        outer = wy * _heat(xk - y, sigma)
        inner = _heat(y[:, None] - eta[None, :], tau) * weta[None, :]
        axes.append(eta)
        vecs.append(outer @ inner)
    return _contract(_grid_values(g, axes), vecs)


def _refined(fn, spec: QuadSpec, what: str) -> float:
    prev = fn(0)
    err = math.inf
    for level in range(1, spec.max_level + 1):
        est = fn(level)
        err = abs(est - prev)
        if err <= spec.rtol * max(1.0, abs(est)):
            return est
        prev = est
    raise QuadratureError(f"{what} did not converge", prev, err)


def semigroup_residual(g: ScalarField, x, t: float, tau: float | None = None, spec: QuadSpec | None = None, form: str = "pointwise") -> float:
    """Residual of the heat-semigroup identity on ``R^n`` (``n <= 2``).

    ``form="pointwise"`` returns ``(H_{t-tau} H_tau g)(x) - (H_t g)(x)`` for
    the Gaussian averages ``H``.  ``form="integrated"`` integrates the
    iterated average over ``tau`` in ``(0, t)`` and subtracts ``t (H_t g)(x)``.
    """
    spec = spec or QuadSpec(kind="gaussian_tail", rtol=1e-12)
    if g.n > 2:
        raise ValueError("the iterated check supports n <= 2")
    x = as_points(x, g.n).reshape(g.n)
    if not t > 0:
        raise ValueError("t must be positive")
    rhs = _refined(lambda lv: _one_step(g, x, t, spec, lv), spec, "single heat average")
    if form == "pointwise":
        if tau is None or not 0 < tau < t:
            raise ValueError("tau must lie in (0, t)")
        lhs = _refined(lambda lv: _two_step(g, x, t, tau, spec, lv), spec, "iterated heat average")
        return lhs - rhs
    if form == "integrated":
        tn, tw = np.polynomial.legendre.leggauss(12)
        taus = 0.5 * t * (tn + 1)
        total = sum(0.5 * t * wi * _refined(lambda lv, ti=ti: _two_step(g, x, t, ti, spec, lv), spec, "iterated heat average") for ti, wi in zip(taus, tw))
        return total - t * rhs
    raise ValueError(f"unknown form {form!r}")

"""Scalar fields on the closed positive orthant and the shipped field catalog.

A field maps points of shape ``(..., n)`` to values of shape ``(...)``.
Catalog fields are finite sums of separable products of ``P(x) exp(-a x^2)``
factors, which are closed under differentiation, so their derivatives of any
order are exact.
"""

from __future__ import annotations

import itertools
import math
import warnings
from typing import Callable, Sequence

import numpy as np
from numpy.polynomial import polynomial as P

from .numerics import central_weights

__all__ = [
    "PrecisionWarning",
    "ScalarField",
    "CallableField",
    "PolyGauss",
    "SeparableField",
    "Source",
    "as_points",
    "numeric_derivative",
    "constant",
    "zero",
    "gaussian",
    "monomial",
    "poly_gauss",
    "linear_combination",
    "FIELD_CATALOG",
    "SOURCE_CATALOG",
    "make_field",
    "make_source",
]

# exact derivative orders kept per catalog factor; the near-axis series of
# B-powers uses the high ones
CATALOG_ORDER = 28


class PrecisionWarning(UserWarning):
    """Emitted when an analytic derivative is replaced by finite differences."""


def as_points(x, n: int) -> np.ndarray:
    """Coerce ``x`` to a float array whose last axis has length ``n``."""
    arr = np.asarray(x, dtype=float)
    if arr.ndim == 0:
        if n != 1:
            raise ValueError(f"scalar point given for a {n}-dimensional field")
        arr = arr.reshape(1)
    if arr.shape[-1] != n:
        raise ValueError(f"points have trailing dimension {arr.shape[-1]}, expected {n}")
    return arr


def _fd_step(order: int) -> tuple[float, int]:
    level = max(0, (order - 1) // 2)
    return 1e-3 * 2.0**level, level


def numeric_derivative(fn: Callable[[np.ndarray], np.ndarray], orders: Sequence[int], x: np.ndarray, steps=None) -> np.ndarray:
    """Mixed partial derivative of ``fn`` by tensor-product central differences.

    Each axis uses a fourth-order-accurate stencil.  The default step for an
    order-``j`` derivative is ``1e-3 * 2**((j-1)//2)``; a
    :class:`PrecisionWarning` is raised once the stencil nesting level
    reaches 2.
    """
    x = np.asarray(x, dtype=float)
    axes = [k for k, o in enumerate(orders) if o]
    if not axes:
        return fn(x)
    stencils = []
    for k in axes:
        order = orders[k]
        if steps is None:
            h, level = _fd_step(order)
            if level >= 2:
                warnings.warn(f"order-{order} derivative by nested finite differences", PrecisionWarning, stacklevel=3)
        else:
            h = float(np.broadcast_to(steps, (len(orders),))[k])
        half = (order + 1) // 2 + 1
        stencils.append((k, h, central_weights(order, half), half))
    out = np.zeros(x.shape[:-1])
    ranges = [range(-half, half + 1) for _, _, _, half in stencils]
    for offs in itertools.product(*ranges):
        coef = 1.0
        shifted = x.copy()
        for (k, h, w, half), o in zip(stencils, offs):
            coef *= w[o + half] / h ** orders[k]
            shifted[..., k] += o * h
        if coef:
            out = out + coef * fn(shifted)
    return out


class ScalarField:
    """A real field on the closed orthant with optional analytic derivatives.

    Subclasses implement :meth:`evaluate` and, when ``derivative_order > 0``,
    :meth:`_derive`.  ``even`` declares evenness in every coordinate, which
    is what licenses evaluating singular operators on the coordinate planes.
    """

    n: int = 1
    derivative_order: int = 0
    even: bool = True
    name: str = "field"

    def evaluate(self, x) -> np.ndarray:
        raise NotImplementedError

    def __call__(self, x) -> np.ndarray:
        return self.evaluate(x)

    def _derive(self, orders: tuple[int, ...], x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def derive(self, orders: Sequence[int], x) -> np.ndarray:
        """Mixed partial derivative ``d^orders f`` at ``x``.

        Falls back to finite differences (with a :class:`PrecisionWarning`)
        when the requested total order on some axis exceeds
        ``derivative_order``.
        """
        orders = tuple(int(o) for o in orders)
        if len(orders) != self.n:
            raise ValueError("orders must have one entry per axis")
        x = as_points(x, self.n)
        if not any(orders):
            return self.evaluate(x)
        if max(orders) <= self.derivative_order:
            return self._derive(orders, x)
        warnings.warn(f"{self.name}: numeric derivative of order {orders}", PrecisionWarning, stacklevel=2)
        return numeric_derivative(self.evaluate, orders, x)

    def __repr__(self):
        return f"<{type(self).__name__} {self.name} n={self.n}>"


class CallableField(ScalarField):
    """Wrap plain callables as a field.

    ``derive`` (if given) is called as ``derive(orders, x)``.
    """

    def __init__(self, fn, n: int = 1, derive=None, derivative_order: int = 0, even: bool = True, name: str = "callable"):
        self._fn = fn
        self._deriv = derive
        self.n = n
        self.derivative_order = derivative_order if derive is not None else 0
        self.even = even
        self.name = name

    def evaluate(self, x):
        return np.asarray(self._fn(as_points(x, self.n)), dtype=float)

    def _derive(self, orders, x):
        return np.asarray(self._deriv(orders, x), dtype=float)


class PolyGauss:
    """One-dimensional factor ``P(x) exp(-a x^2)`` with exact derivatives."""

    def __init__(self, coeffs, a: float = 0.0):
        self.coeffs = np.trim_zeros(np.asarray(coeffs, dtype=float), "b")
        if self.coeffs.size == 0:
            self.coeffs = np.zeros(1)
        self.a = float(a)
        polys = [self.coeffs]
        for _ in range(CATALOG_ORDER):
            c = polys[-1]
            # (P e^{-ax^2})' = (P' - 2 a x P) e^{-ax^2}
            polys.append(P.polysub(P.polyder(c), 2 * self.a * P.polymulx(c)))
        self._polys = polys

    @property
    def even(self) -> bool:
        return not np.any(self.coeffs[1::2])

    def __call__(self, x, order: int = 0):
        x = np.asarray(x, dtype=float)
        return P.polyval(x, self._polys[order]) * np.exp(-self.a * x * x)


class SeparableField(ScalarField):
    """Finite sum ``sum_i c_i prod_k g_ik(x_k)`` of :class:`PolyGauss` products."""

    derivative_order = CATALOG_ORDER

    def __init__(self, terms, n: int, name: str = "separable"):
        self.terms = [(float(c), tuple(factors)) for c, factors in terms]
        for _, factors in self.terms:
            if len(factors) != n:
                raise ValueError("every term needs one factor per axis")
        self.n = n
        self.name = name
        self.even = all(f.even for _, fs in self.terms for f in fs)

    def evaluate(self, x):
        return self._derive((0,) * self.n, as_points(x, self.n))

    def _derive(self, orders, x):
        out = np.zeros(x.shape[:-1])
        for c, factors in self.terms:
            prod = c
            for k, g in enumerate(factors):
                prod = prod * g(x[..., k], orders[k])
            out = out + prod
        return out

    def __add__(self, other):
        if not isinstance(other, SeparableField) or other.n != self.n:
            return NotImplemented
        return SeparableField(self.terms + other.terms, self.n, f"({self.name} + {other.name})")

    def __mul__(self, c):
        c = float(c)
        return SeparableField([(c * a, fs) for a, fs in self.terms], self.n, f"{c:g}*{self.name}")

    __rmul__ = __mul__

    def __neg__(self):
        return self * -1.0

    def __sub__(self, other):
        return self + (-other)


class _Combination(ScalarField):
    def __init__(self, fields, coeffs):
        self.fields = list(fields)
        self.coeffs = [float(c) for c in coeffs]
        self.n = self.fields[0].n
        self.derivative_order = min(f.derivative_order for f in self.fields)
        self.even = all(f.even for f in self.fields)
        self.name = " + ".join(f"{c:g}*{f.name}" for c, f in zip(self.coeffs, self.fields))

    def evaluate(self, x):
        x = as_points(x, self.n)
        return sum(c * f.evaluate(x) for c, f in zip(self.coeffs, self.fields))

    def _derive(self, orders, x):
        return sum(c * f.derive(orders, x) for c, f in zip(self.coeffs, self.fields))


def linear_combination(fields, coeffs) -> ScalarField:
    """``sum_i coeffs[i] * fields[i]``, keeping exact derivatives where every part has them."""
    fields = list(fields)
    if not fields:
        raise ValueError("empty combination")
    if any(f.n != fields[0].n for f in fields):
        raise ValueError("fields of different dimension")
    if all(isinstance(f, SeparableField) for f in fields):
        out = fields[0] * coeffs[0]
        for f, c in zip(fields[1:], coeffs[1:]):
            out = out + f * c
        return out
    return _Combination(fields, coeffs)


# --------------------------------------------------------------------------
# catalog


def constant(c: float = 1.0, n: int = 1) -> SeparableField:
    return SeparableField([(c, [PolyGauss([1.0])] * n)], n, f"const({c:g})")


def zero(n: int = 1) -> SeparableField:
    return SeparableField([(0.0, [PolyGauss([1.0])] * n)], n, "zero")


def gaussian(n: int = 1, a: float = 1.0, scale: float = 1.0) -> SeparableField:
    """``scale * exp(-a |x|^2)``."""
    return SeparableField([(scale, [PolyGauss([1.0], a)] * n)], n, f"gauss(a={a:g})")


def monomial(powers: Sequence[int], scale: float = 1.0) -> SeparableField:
    """``scale * prod_k x_k^{powers[k]}``; even only if every power is even."""
    factors = []
    for p in powers:
        c = np.zeros(int(p) + 1)
        c[-1] = 1.0
        factors.append(PolyGauss(c))
    label = "*".join(f"x{k + 1}^{p}" for k, p in enumerate(powers))
    return SeparableField([(scale, factors)], len(powers), label)


def poly_gauss(q: int, a: float = 1.0, n: int = 1, scale: float = 1.0) -> SeparableField:
    """``scale * prod_k x_k^{2q} exp(-a x_k^2)``."""
    c = np.zeros(2 * q + 1)
    c[-1] = 1.0
    return SeparableField([(scale, [PolyGauss(c, a)] * n)], n, f"x^{2 * q}*gauss(a={a:g})")


def _radial_sum(n: int, power: int = 2, scale: float = 1.0) -> SeparableField:
    terms = []
    for k in range(n):
        powers = [0] * n
        powers[k] = power
        terms += monomial(powers, scale).terms
    return SeparableField(terms, n, f"|x|^{power}-sum")


FIELD_CATALOG: dict[str, Callable[..., SeparableField]] = {
    "zero": lambda n=1: zero(n),
    "constant": lambda n=1, value=1.0: constant(value, n),
    "gaussian": lambda n=1, a=1.0, scale=1.0: gaussian(n, a, scale),
    "monomial": lambda n=1, powers=None, scale=1.0: monomial(powers or [2] * n, scale),
    "square_sum": lambda n=1, scale=1.0: _radial_sum(n, 2, scale),
    "poly_gauss": lambda n=1, q=1, a=1.0, scale=1.0: poly_gauss(q, a, n, scale),
}


def make_field(spec) -> SeparableField:
    """Build a catalog field from ``{"id": ..., **params}`` (or just an id string)."""
    if isinstance(spec, str):
        spec = {"id": spec}
    params = dict(spec)
    key = params.pop("id", None)
    if key not in FIELD_CATALOG:
        raise KeyError(f"unknown field catalog id {key!r}")
    return FIELD_CATALOG[key](**params)


class Source:
    """Right-hand side ``f(x, t) = sum_i g_i(x) * T_i(t)`` with polynomial ``T_i``.

    Every spatial part must be even in each coordinate.
    """

    def __init__(self, parts, name: str = "source"):
        self.parts = [(field, np.asarray(tc, dtype=float)) for field, tc in parts]
        if not self.parts:
            raise ValueError("a source needs at least one part")
        self.n = self.parts[0][0].n
        self.even = all(f.even for f, _ in self.parts)
        self.name = name

    def __call__(self, x, t) -> np.ndarray:
        x = as_points(x, self.n)
        t = np.asarray(t, dtype=float)
        return sum(field.evaluate(x) * P.polyval(t, tc) for field, tc in self.parts)

    def at_time(self, t: float) -> ScalarField:
        return linear_combination([f for f, _ in self.parts], [P.polyval(t, tc) for _, tc in self.parts])


SOURCE_CATALOG: dict[str, Callable[..., Source]] = {
    "constant": lambda n=1, value=1.0: Source([(constant(value, n), [1.0])], f"const({value:g})"),
    "square_sum": lambda n=1, scale=1.0: Source([(_radial_sum(n, 2, scale), [1.0])], "|x|^2"),
    "gaussian_decay": lambda n=1, a=1.0, scale=1.0: Source([(gaussian(n, a, scale), [1.0, -0.5])], "gauss*(1-t/2)"),
}


def make_source(spec) -> Source:
    if isinstance(spec, str):
        spec = {"id": spec}
    params = dict(spec)
    key = params.pop("id", None)
    if key not in SOURCE_CATALOG:
        raise KeyError(f"unknown source catalog id {key!r}")
    return SOURCE_CATALOG[key](**params)

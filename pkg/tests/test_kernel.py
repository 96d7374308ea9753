import math

import mpmath
import numpy as np
import pytest

from polycaloric import fields as F
from polycaloric.bessel_diffop import GammaVec
from polycaloric.kernel import (
    KernelWeight,
    g0,
    kernel_mass,
    semigroup_residual,
    weber_sonine_lhs,
    weber_sonine_residual,
    weber_sonine_rhs,
    weight,
    weight_smooth,
)


def weight_ref(gamma, x, s, t):
    """``x^{-g} s^{g+1} e^{-(x^2+s^2)/4t} I_g(xs/2t) / (2t)`` in mpmath."""
    g, x, s, t = (mpmath.mpf(v) for v in (gamma, x, s, t))
    if x == 0:
        # I_g(z) z^{-g} -> 2^{-g} / Gamma(g+1)
        return float(s ** (2 * g + 1) * (4 * t) ** (-g) / (2 * t * mpmath.gamma(g + 1)) * mpmath.exp(-s * s / (4 * t)))
    z = x * s / (2 * t)
    return float(x ** (-g) * s ** (g + 1) * mpmath.exp(-(x * x + s * s) / (4 * t)) * mpmath.besseli(g, z) / (2 * t))


class TestG0:
    def test_at_origin(self):
        assert g0(0.0, 0.0, 1.0) == pytest.approx(1 / math.sqrt(math.pi), rel=1e-15)

    def test_symmetric_in_x(self):
        assert g0(0.7, 1.1, 0.3) == g0(-0.7, 1.1, 0.3)

    def test_rejects_nonpositive_time(self):
        with pytest.raises(ValueError):
            g0(0.0, 0.0, 0.0)


class TestWeight:
    @pytest.mark.parametrize("gamma", [-0.4, 0.0, 0.25, 0.49])
    @pytest.mark.parametrize("x,s,t", [(0.0, 1.0, 1.0), (0.5, 2.0, 0.3), (3.0, 2.5, 0.05), (40.0, 41.0, 0.5)])
    def test_against_mpmath(self, gamma, x, s, t):
        assert weight(gamma, x, s, t) == pytest.approx(weight_ref(gamma, x, s, t), rel=1e-12)

    def test_axis_closed_form(self):
        g, s, t = 0.25, 1.3, 0.7
        exact = s ** (2 * g + 1) * (4 * t) ** (-g) / (2 * t * math.gamma(g + 1)) * math.exp(-s * s / (4 * t))
        assert weight(g, 0.0, s, t) == pytest.approx(exact, rel=1e-14)

    def test_smooth_factor_even_in_x(self):
        assert weight_smooth(0.1, -1.2, 0.4, 0.5) == weight_smooth(0.1, 1.2, 0.4, 0.5)

    def test_no_overflow_at_large_argument(self):
        w = weight(0.3, 500.0, 500.0, 1e-3)
        assert np.isfinite(w) and w > 0

    def test_bad_inputs(self):
        with pytest.raises(ValueError):
            weight(0.1, 1.0, -1.0, 1.0)
        with pytest.raises(ValueError):
            weight(-0.6, 1.0, 1.0, 1.0)
        with pytest.raises(ValueError):
            weight(0.1, 1.0, 1.0, -1.0)

    def test_half_line_limit_matches_g0(self):
        ss = np.linspace(0.1, 6.0, 60)
        assert np.max(np.abs(weight(-0.499, 1.0, ss, 1.0) - g0(1.0, ss, 1.0))) <= 2e-2


class TestMass:
    @pytest.mark.parametrize("gamma", [-0.4, 0.0, 0.4])
    @pytest.mark.parametrize("x", [0.0, 1.25, 5.0])
    @pytest.mark.parametrize("t", [0.1, 1.0, 10.0])
    def test_unit_mass(self, gamma, x, t):
        assert abs(kernel_mass(gamma, x, t) - 1.0) <= 1e-10

    def test_mass_against_mpmath(self):
        ref = mpmath.quad(lambda s: weight_ref(0.25, 1.0, s, 0.5), [0, 1, 3, mpmath.inf])
        assert float(ref) == pytest.approx(1.0, abs=1e-12)

    def test_product_rule_normalized(self):
        k = KernelWeight(GammaVec((0.1, -0.3)))
        total = 1.0
        for j, xj in enumerate((0.4, 1.7)):
            _, w = k.axis_rule(j, xj, 0.6, k_spec())
            total *= w.sum()
        assert total == pytest.approx(1.0, abs=1e-10)


def k_spec():
    from polycaloric.numerics import QuadSpec

    return QuadSpec(kind="gaussian_tail", rtol=1e-12)


class TestWeberSonine:
    @pytest.mark.parametrize("nu,x,s,t", [(0.25, 1.0, 1.0, 1.0), (-0.4, 1.0, 3.0, 2.0), (0.4, 3.0, 2.5, 0.1), (0.0, 2.0, 0.1, 0.2)])
    def test_residual(self, nu, x, s, t):
        assert abs(weber_sonine_residual(nu, x, s, t)) <= 1e-8

    def test_rhs_against_mpmath(self):
        nu, x, s, t = 0.3, 1.2, 0.8, 0.4
        ref = float(mpmath.exp(-(x * x + s * s) / (4 * t)) * mpmath.besseli(nu, x * s / (2 * t)) / (2 * t))
        assert weber_sonine_rhs(nu, x, s, t) == pytest.approx(ref, rel=1e-12)

    def test_lhs_against_mpmath(self):
        nu, x, s, t = 0.0, 1.0, 0.5, 0.5
        ref = mpmath.quad(lambda l: mpmath.exp(-t * l * l) * mpmath.besselj(0, s * l) * mpmath.besselj(0, x * l) * l, [0, mpmath.inf])
        assert weber_sonine_lhs(nu, x, s, t) == pytest.approx(float(ref), rel=1e-10)


class TestSemigroup:
    @pytest.mark.parametrize("field", [F.gaussian(), F.constant(), F.monomial([2])], ids=["gauss", "one", "square"])
    def test_pointwise(self, field):
        assert abs(semigroup_residual(field, 0.5, 1.0, 0.4)) <= 1e-8

    def test_integrated(self):
        assert abs(semigroup_residual(F.gaussian(), 1.3, 0.5, form="integrated")) <= 1e-8

    def test_two_dimensional(self):
        assert abs(semigroup_residual(F.gaussian(2), [0.4, 1.1], 0.8, 0.3)) <= 1e-8

    def test_square_closed_form_average(self):
        # the heat average of eta^2 is x^2 + 2t, so the residual vanishes to rounding
        assert abs(semigroup_residual(F.monomial([2]), 1.3, 0.5, 0.1)) <= 1e-12

    def test_bad_tau(self):
        with pytest.raises(ValueError):
            semigroup_residual(F.gaussian(), 0.5, 1.0, 1.0)
        with pytest.raises(ValueError):
            semigroup_residual(F.gaussian(), 0.5, 1.0, form="nope")

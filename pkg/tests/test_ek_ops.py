import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from polycaloric import fields as F
from polycaloric.ek_ops import (
    EKField,
    EKParams,
    ek_apply,
    ek_inverse_generalized,
    ek_inverse_plain,
    intertwine_residual,
    intertwine_sum_residual,
    inverse_intertwine_residual,
)
from polycaloric.numerics import QuadSpec

S = QuadSpec(rtol=1e-12)


def ek_ref(alpha, eta, lam, fn, x):
    """Defining integral in the original variable, by mpmath tanh-sinh quadrature.

    The endpoint singularity at t = x needs extra working digits.
    """
    with mpmath.workdps(50):
        return _ek_ref(alpha, eta, lam, fn, x)


def _ek_ref(alpha, eta, lam, fn, x):
    alpha, eta, lam, x = (mpmath.mpf(v) for v in (alpha, eta, lam, x))

    def kernel(t):
        z = lam * mpmath.sqrt(x * x - t * t)
        jbar = mpmath.mpf(1) if z == 0 else mpmath.gamma(alpha) * (z / 2) ** (1 - alpha) * mpmath.besselj(alpha - 1, z)
        return (x * x - t * t) ** (alpha - 1) * t ** (2 * eta + 1) * jbar * fn(t)

    return float(2 / mpmath.gamma(alpha) * x ** (-2 * (alpha + eta)) * mpmath.quad(kernel, [0, x]))


class TestParams:
    def test_validation(self):
        with pytest.raises(ValueError):
            EKParams((0.0,), (0.0,))
        with pytest.raises(ValueError):
            EKParams((0.5,), (-0.6,))
        with pytest.raises(ValueError):
            EKParams((0.5, 0.5), (0.0,))
        with pytest.raises(ValueError):
            EKParams((0.5,), (0.0,), (-1.0,))
        with pytest.raises(ValueError):
            EKParams((1.5,), (0.0,)).require_invertible()

    def test_inverse_needs_alpha_below_one(self):
        with pytest.raises(ValueError):
            ek_inverse_plain(EKParams((1.2,), (0.0,)), F.gaussian(), 1.0)

    def test_plain_inverse_rejects_lambda(self):
        with pytest.raises(ValueError):
            ek_inverse_plain(EKParams((0.5,), (0.0,), (0.3,)), F.gaussian(), 1.0)

    def test_points_must_be_interior(self):
        with pytest.raises(ValueError):
            ek_apply(EKParams((0.5,), (0.0,)), F.gaussian(), 0.0)


class TestForward:
    def test_power_law_example(self):
        got = ek_apply(EKParams((0.75,), (-0.5,)), F.monomial([2]), 1.0, S)
        assert got == pytest.approx(math.gamma(1.5) / math.gamma(2.25), rel=1e-12)

    @pytest.mark.parametrize("alpha,eta", [(0.25, -0.5), (0.6, 0.0), (1.7, 1.0)])
    def test_constant(self, alpha, eta):
        ref = math.gamma(eta + 1) / math.gamma(eta + alpha + 1)
        for x in (0.3, 2.0):
            assert ek_apply(EKParams((alpha,), (eta,)), F.constant(), x, S) == pytest.approx(ref, rel=1e-12)

    def test_separable_two_dimensional(self):
        got = ek_apply(EKParams((0.5, 0.5), (-0.5, -0.5)), F.monomial([2, 2]), [1.0, 1.0], S)
        one = math.gamma(1.5) / math.gamma(2.0)
        assert got == pytest.approx(one * one, rel=1e-12)

    @pytest.mark.parametrize("alpha,eta,lam,x", [(0.6, -0.5, 0.0, 0.7), (0.3, 0.2, 0.8, 1.4), (1.5, -0.5, 2.0, 2.0)])
    def test_against_mpmath(self, alpha, eta, lam, x):
        ref = ek_ref(alpha, eta, lam, lambda t: mpmath.exp(-t * t), x)
        assert ek_apply(EKParams((alpha,), (eta,), (lam,)), F.gaussian(), x, S) == pytest.approx(ref, rel=1e-11)

    def test_vectorized_points(self):
        xs = np.array([[0.5], [1.0], [2.0]])
        out = ek_apply(EKParams((0.5,), (0.0,)), F.gaussian(), xs, S)
        assert out.shape == (3,)

    def test_lambda_continuity(self):
        a = ek_apply(EKParams((0.6,), (-0.5,), (1e-6,)), F.gaussian(), 1.0, S)
        b = ek_apply(EKParams((0.6,), (-0.5,)), F.gaussian(), 1.0, S)
        assert abs(a - b) <= 1e-8

    @settings(max_examples=15, deadline=None)
    @given(a=st.floats(-3, 3), b=st.floats(-3, 3), x=st.floats(0.1, 3.0))
    def test_linearity(self, a, b, x):
        p = EKParams((0.6,), (-0.5,), (0.3,))
        f, g = F.gaussian(), F.poly_gauss(1)
        lhs = ek_apply(p, F.linear_combination([f, g], [a, b]), x, S)
        rhs = a * ek_apply(p, f, x, S) + b * ek_apply(p, g, x, S)
        assert lhs == pytest.approx(rhs, abs=1e-12)


class TestInverse:
    def test_power_law(self):
        got = ek_inverse_plain(EKParams((0.75,), (-0.5,)), F.monomial([2]), 1.0, S)
        assert got == pytest.approx(math.gamma(2.25) / math.gamma(1.5), rel=1e-12)

    def test_constant(self):
        got = ek_inverse_plain(EKParams((0.4,), (0.3,)), F.constant(), 1.7, S)
        assert got == pytest.approx(math.gamma(1.7) / math.gamma(1.3), rel=1e-12)

    def test_plain_round_trip(self):
        p = EKParams((0.75,), (-0.5,))
        got = ek_inverse_plain(p, EKField(p, F.gaussian(), S), 0.7, S)
        assert got == pytest.approx(math.exp(-0.49), rel=1e-8)

    def test_generalized_round_trip(self):
        p = EKParams((0.6,), (-0.5,), (0.5,))
        got = ek_inverse_generalized(p, EKField(p, F.gaussian(), S), 1.0, S)
        assert got == pytest.approx(math.exp(-1.0), rel=1e-7)

    def test_lambda_zero_collapse(self):
        p = EKParams((0.6,), (-0.5,))
        assert ek_inverse_generalized(p, F.monomial([2]), 1.1, S) == pytest.approx(ek_inverse_plain(p, F.monomial([2]), 1.1, S), rel=1e-10)

    def test_zero_field(self):
        assert ek_inverse_generalized(EKParams((0.6,), (-0.5,), (0.5,)), F.zero(), 1.0, S) == 0.0

    def test_two_dimensional_round_trip(self):
        p = EKParams((0.3, 0.8), (-0.5, 0.1), (0.2, 0.0))
        f = F.gaussian(2)
        got = ek_inverse_generalized(p, EKField(p, f, S), [0.8, 1.3], S)
        assert got == pytest.approx(float(f.evaluate(np.array([0.8, 1.3]))), rel=1e-7)


class TestIntertwining:
    def test_single_axis(self):
        assert abs(intertwine_residual(EKParams((0.6,), (-0.5,), (0.3,)), F.gaussian(), 0, 1, 1.0, S)) <= 1e-6

    def test_zero_field(self):
        assert intertwine_residual(EKParams((0.6,), (-0.5,), (0.3,)), F.zero(), 0, 1, 1.0, S) == 0.0

    def test_second_power(self):
        assert abs(intertwine_residual(EKParams((0.6,), (-0.5,)), F.gaussian(), 0, 2, 1.0, S)) <= 1e-5

    def test_laplacian_two_dimensional(self):
        p = EKParams((0.5, 0.5), (-0.5, -0.5))
        assert abs(intertwine_sum_residual(p, F.gaussian(2), 1, [1.0, 0.6], S)) <= 1e-6

    def test_laplacian_constant(self):
        p = EKParams((0.5, 0.5), (-0.5, -0.5))
        assert abs(intertwine_sum_residual(p, F.constant(n=2), 1, [1.0, 0.6], S)) <= 1e-8

    def test_laplacian_square_with_lambda(self):
        assert abs(intertwine_sum_residual(EKParams((0.6,), (-0.5,), (0.4,)), F.gaussian(), 2, 1.0, S)) <= 1e-5

    def test_inverse_gaussian(self):
        assert abs(inverse_intertwine_residual(EKParams((0.75,), (-0.5,)), F.gaussian(), 1, 1.0, S)) <= 1e-5

    def test_inverse_polynomial(self):
        assert abs(inverse_intertwine_residual(EKParams((0.75,), (-0.5,)), F.monomial([4]), 1, 1.0, S)) <= 1e-8

    def test_inverse_zero(self):
        assert inverse_intertwine_residual(EKParams((0.75,), (-0.5,)), F.zero(), 1, 1.0, S) == 0.0

    def test_bad_powers(self):
        with pytest.raises(ValueError):
            intertwine_residual(EKParams((0.6,), (-0.5,)), F.gaussian(), 0, 0, 1.0)
        with pytest.raises(ValueError):
            intertwine_sum_residual(EKParams((0.6,), (-0.5,)), F.gaussian(), 0, 1.0)

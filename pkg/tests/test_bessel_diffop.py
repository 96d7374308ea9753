import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from polycaloric import fields as F
from polycaloric.bessel_diffop import (
    DeltaBPowerField,
    GammaVec,
    ProblemSpec,
    apply_B,
    apply_B_pow,
    apply_DeltaB_pow,
    assemble_fk,
    assemble_fk_alternate,
    bessel_terms,
    validate_initial_data,
)


def b_ref(gamma, fn, x):
    """Symbolic-free oracle: mpmath derivatives of a callable."""
    return float(mpmath.diff(fn, x, 2) + (2 * gamma + 1) / x * mpmath.diff(fn, x, 1))


def gauss_bessel_series(gamma, power, extra, x, terms=80):
    """``d^extra B^power exp(-x^2)`` termwise from ``sum (-1)^J x^(2J) / J!``."""
    with mpmath.workdps(40):
        g, x = mpmath.mpf(gamma), mpmath.mpf(x)
        total = mpmath.mpf(0)
        for big_j in range(power, terms):
            q = 2 * big_j - 2 * power
            if q < extra:
                continue
            c = mpmath.mpf(-1) ** big_j / mpmath.factorial(big_j)
            for i in range(power):
                c *= (2 * big_j - 2 * i) * (2 * big_j - 2 * i + 2 * g)
            c *= mpmath.ff(q, extra)
            total += c * x ** (q - extra)
        return float(total)


class TestGammaVec:
    def test_strict_range(self):
        with pytest.raises(ValueError):
            GammaVec((0.5,))
        assert GammaVec((0.7,), strict=False).alpha == (1.2,)
        with pytest.raises(ValueError):
            GammaVec((-0.5,), strict=False)

    def test_problem_checks(self):
        with pytest.raises(ValueError):
            ProblemSpec((0.1,), (F.monomial([1]),))
        with pytest.raises(ValueError):
            ProblemSpec((0.1,), (F.gaussian(2),))
        with pytest.raises(ValueError):
            ProblemSpec((0.1,), ())
        p = ProblemSpec((0.1, 0.2), (F.gaussian(2), F.zero(2)))
        assert (p.n, p.m) == (2, 2)


class TestApplyB:
    @pytest.mark.parametrize("gamma", [-0.4, 0.0, 0.25])
    def test_square_is_constant(self, gamma):
        x = np.array([[0.0], [0.3], [2.0]])
        np.testing.assert_allclose(apply_B(gamma, F.monomial([2]), 0, x), 4 * gamma + 4, rtol=1e-14)

    def test_constant_is_annihilated(self):
        assert float(apply_B(0.3, F.constant(), 0, np.array([1.2]))) == 0.0

    def test_gaussian_example(self):
        assert float(apply_B(0.25, F.gaussian(), 0, np.array([1.0]))) == pytest.approx(-math.exp(-1), rel=1e-14)

    @pytest.mark.parametrize("x", [0.2, 1.0, 2.7])
    def test_against_mpmath(self, x):
        fn = lambda u: u**2 * mpmath.exp(-(u**2))
        assert float(apply_B(-0.3, F.poly_gauss(1), 0, np.array([x]))) == pytest.approx(b_ref(-0.3, fn, x), rel=1e-12)

    def test_axis_limit_converges(self):
        f = F.gaussian()
        at0 = float(apply_B(0.25, f, 0, np.array([0.0])))
        assert at0 == pytest.approx((2 * 0.25 + 2) * -2.0)
        gaps = [abs(float(apply_B(0.25, f, 0, np.array([x]))) - at0) for x in (1e-2, 1e-3)]
        assert gaps[1] < 0.02 * gaps[0]

    def test_power_two_is_repeated_application(self):
        f = F.poly_gauss(2)
        once = DeltaBPowerField(f, (0.2,), 1)
        for x in (0.0, 0.4, 1.9):
            a = float(apply_B_pow(0.2, f, 0, 2, np.array([x])))
            b = float(apply_B(0.2, once, 0, np.array([x])))
            assert a == pytest.approx(b, rel=1e-9, abs=1e-9)

    def test_terms_cached_and_consistent(self):
        assert bessel_terms(0.1, 1) == bessel_terms(0.1, 1)

    @pytest.mark.parametrize("power", [1, 2, 3])
    @pytest.mark.parametrize("extra", [0, 1])
    @pytest.mark.parametrize("x", [5e-324, 1e-9, 1e-4, 0.02, 0.0499, 0.0501, 0.3, 1.5])
    def test_powers_near_axis_against_series(self, power, extra, x):
        gamma = 0.25
        ref = gauss_bessel_series(gamma, power, extra, x)
        got = float(apply_B_pow(gamma, F.gaussian(), 0, power, np.array([x]), extra=[extra]))
        assert got == pytest.approx(ref, rel=1e-11, abs=1e-11 * 45.0**power)

    def test_odd_field_on_axis_rejected(self):
        with pytest.raises(ValueError):
            apply_B(0.1, F.monomial([1]), 0, np.array([0.0]))


class TestDeltaB:
    def test_one_dimensional_value(self):
        assert float(apply_DeltaB_pow((0.1,), F.monomial([2]), 1, np.array([0.8]))) == pytest.approx(4.4)

    def test_two_dimensional_value(self):
        f = F.make_field({"id": "square_sum", "n": 2})
        assert float(apply_DeltaB_pow((0.1, 0.2), f, 1, np.array([0.5, 1.5]))) == pytest.approx(9.2)

    def test_p_zero_identity(self):
        f = F.gaussian(2)
        x = np.array([0.3, 0.9])
        assert float(apply_DeltaB_pow((0.1, 0.2), f, 0, x)) == float(f.evaluate(x))

    def test_power_two(self):
        f = F.gaussian(2)
        once = DeltaBPowerField(f, (0.1, -0.2), 1)
        for x in ([0.0, 0.5], [1.0, 1.2], [0.0, 0.0]):
            a = float(apply_DeltaB_pow((0.1, -0.2), f, 2, np.array(x)))
            b = float(apply_DeltaB_pow((0.1, -0.2), once, 1, np.array(x)))
            assert a == pytest.approx(b, rel=1e-9, abs=1e-9)

    @settings(max_examples=25, deadline=None)
    @given(x=st.floats(0.0, 3.0), y=st.floats(0.0, 3.0), a=st.floats(-2, 2), b=st.floats(-2, 2))
    def test_additivity(self, x, y, a, b):
        f, g = F.gaussian(2), F.poly_gauss(1, n=2)
        pt = np.array([x, y])
        lhs = float(apply_DeltaB_pow((0.1, 0.3), F.linear_combination([f, g], [a, b]), 1, pt))
        rhs = a * float(apply_DeltaB_pow((0.1, 0.3), f, 1, pt)) + b * float(apply_DeltaB_pow((0.1, 0.3), g, 1, pt))
        assert lhs == pytest.approx(rhs, abs=1e-10)


class TestAssembly:
    def test_k0_is_phi0(self):
        p = ProblemSpec((0.25,), (F.gaussian(), F.zero()))
        x = np.linspace(0, 2, 5)[:, None]
        np.testing.assert_array_equal(assemble_fk(p, 0).evaluate(x), F.gaussian().evaluate(x))

    def test_k1_quadratic(self):
        p = ProblemSpec((0.25,), (F.monomial([2]), F.zero()))
        np.testing.assert_allclose(assemble_fk(p, 1).evaluate(np.array([[0.0], [1.0], [2.5]])), -5.0, rtol=1e-14)

    def test_zero_phi0(self):
        p = ProblemSpec((0.25,), (F.zero(), F.constant()))
        x = np.array([[0.0], [1.0]])
        np.testing.assert_allclose(assemble_fk(p, 0).evaluate(x), 0.0)
        np.testing.assert_allclose(assemble_fk(p, 1).evaluate(x), 1.0)

    @pytest.mark.parametrize("m", [2, 3])
    def test_alternate_indexing_differs_by_sign(self, m):
        phis = (F.poly_gauss(3), F.poly_gauss(2), F.gaussian())[:m]
        p = ProblemSpec((-0.2,), phis)
        x = np.linspace(0, 3, 7)[:, None]
        for k in range(m):
            np.testing.assert_allclose(assemble_fk_alternate(p, k).evaluate(x), (-1) ** k * assemble_fk(p, k).evaluate(x), atol=1e-12)

    def test_k_out_of_range(self):
        with pytest.raises(ValueError):
            assemble_fk(ProblemSpec((0.1,), (F.gaussian(),)), 1)


class TestValidator:
    def test_first_order_gaussian_passes(self):
        rep = validate_initial_data(ProblemSpec((0.25,), (F.gaussian(),)))
        assert rep.passed and rep.notes

    def test_second_order_gaussian_fails_at_order_two(self):
        rep = validate_initial_data(ProblemSpec((0.25,), (F.gaussian(), F.zero())))
        assert not rep.passed
        bad = [v for v in rep.violations if v["kind"] == "derivative"]
        assert bad[0]["order"] == 2 and bad[0]["magnitude"] == pytest.approx(2.0)

    def test_quartic_gaussian_passes(self):
        rep = validate_initial_data(ProblemSpec((0.25,), (F.poly_gauss(2), F.gaussian())))
        assert rep.passed
        assert all(c["decays"] for c in rep.limit_checks)

    def test_report_serializes(self):
        d = validate_initial_data(ProblemSpec((0.1, 0.1), (F.gaussian(2),))).to_dict()
        assert set(d) == {"passed", "violations", "limit_checks", "notes"}

import math

import numpy as np
import pytest

from polycaloric import fields as F
from polycaloric.bessel_diffop import ProblemSpec
from polycaloric.fd_oracle import (
    FDResult,
    Grid1D,
    InstabilityError,
    bessel_matrix,
    conserved_mass_weights,
    convergence_study,
    fd_solve,
    fd_solve_2d,
    observed_order,
    weighted_mass,
)


def heat_gauss(gamma, x, t):
    d = 1 + 4 * t
    return d ** (-(gamma + 1)) * np.exp(-x * x / d)


class TestGrid:
    def test_properties(self):
        g = Grid1D(8.0, 128, 1e-2, 0.5)
        assert g.h == 0.0625 and g.steps == 50 and g.x[-1] == 8.0
        assert g.explicit_bound == pytest.approx(0.0625**2 / 2)

    @pytest.mark.parametrize("args", [(0.0, 128, 1e-2, 1), (8.0, 32, 1e-2, 1), (8.0, 128, 0.0, 1)])
    def test_rejects(self, args):
        with pytest.raises(ValueError):
            Grid1D(*args)


def test_matrix_kills_constants_and_maps_square():
    A = bessel_matrix(0.25, 64, 0.1).toarray()
    x = np.arange(65) * 0.1
    np.testing.assert_allclose((A @ np.ones(65))[:-1], 0.0, atol=1e-9)
    np.testing.assert_allclose((A @ x**2)[:-1], 4 * 0.25 + 4, rtol=1e-10)


class TestSolve:
    @pytest.mark.parametrize("gamma", [-0.4, 0.25])
    def test_quadratic_is_exact(self, gamma):
        res = fd_solve(ProblemSpec((gamma,), (F.monomial([2]),)), Grid1D(8.0, 128, 1e-2, 0.5), far_values=[lambda t: 64.0 + (4 * gamma + 4) * t])
        np.testing.assert_allclose(res.final, res.grid.x**2 + (4 * gamma + 4) * 0.5, atol=1e-10)

    def test_constant_source(self):
        res = fd_solve(ProblemSpec((0.1,), (F.zero(),), F.make_source("constant")), Grid1D(4.0, 64, 0.05, 1.0), far_values=[lambda t: t])
        np.testing.assert_allclose(res.final, 1.0, atol=1e-12)

    def test_gaussian_against_closed_form(self):
        res = fd_solve(ProblemSpec((0.25,), (F.gaussian(),)), Grid1D(8.0, 1024, 1e-3, 0.5))
        assert np.max(np.abs(res.final - heat_gauss(0.25, res.grid.x, 0.5))) <= 1e-4

    def test_second_order_cascade(self):
        # phi0 = 0, phi1 = 1 gives u = t
        res = fd_solve(ProblemSpec((0.25,), (F.zero(), F.constant())), Grid1D(4.0, 64, 0.05, 1.0), far_values=[lambda t: t, 1.0])
        np.testing.assert_allclose(res.final, 1.0, atol=1e-12)
        assert isinstance(res, FDResult) and "W1" in res.components

    def test_saved_snapshots(self):
        res = fd_solve(ProblemSpec((0.25,), (F.gaussian(),)), Grid1D(8.0, 128, 1e-2, 1.0), save_times=[0.0, 0.5, 1.0])
        np.testing.assert_allclose(res.times, [0.0, 0.5, 1.0])
        assert res.history.shape == (3, 129)

    def test_max_principle(self):
        res = fd_solve(ProblemSpec((0.25,), (F.gaussian(),)), Grid1D(8.0, 256, 1e-2, 1.0), save_times=np.linspace(0, 1, 11))
        assert res.history.max() <= 1.0 + 1e-12 and res.history.min() >= -1e-12
        assert np.all(np.diff(res.history[:, 0]) <= 0)

    def test_growth_is_flagged(self):
        prob = ProblemSpec((0.25,), (F.gaussian(),), F.make_source({"id": "constant", "value": 1e7}))
        with pytest.raises(InstabilityError):
            fd_solve(prob, Grid1D(8.0, 64, 0.1, 1.0))

    def test_argument_checks(self):
        with pytest.raises(ValueError):
            fd_solve(ProblemSpec((0.1, 0.1), (F.gaussian(2),)), Grid1D(4.0, 64, 0.1, 1.0))
        with pytest.raises(ValueError):
            fd_solve(ProblemSpec((0.1,), (F.gaussian(),)), Grid1D(4.0, 64, 0.1, 1.0), far_values=[0.0, 0.0])


class TestMass:
    def test_weighted_mass_of_constant(self):
        h, N, g = 0.01, 400, 0.1
        assert weighted_mass(np.ones(N + 1), g, h) == pytest.approx((N * h) ** (2 * g + 2) / (2 * g + 2), rel=1e-13)

    def test_conserved_weights(self):
        g, grid = 0.25, Grid1D(12.0, 512, 1e-2, 1.0)
        mu = conserved_mass_weights(g, grid.N, grid.h)
        res = fd_solve(ProblemSpec((g,), (F.gaussian(),)), grid, save_times=[0.0, 1.0])
        m0, m1 = (float(mu @ u) for u in res.history)
        # flux through x = L is ~exp(-L^2 / 5), negligible at L = 12
        assert abs(m1 - m0) <= 1e-9 * abs(m0)
        exact = math.gamma(g + 1) / 2
        assert weighted_mass(res.history[0], g, grid.h) == pytest.approx(exact, rel=1e-3)


class TestConvergence:
    def test_observed_order(self):
        assert observed_order([4e-2, 1e-2, 2.5e-3]) == pytest.approx([2.0, 2.0])

    def test_space_order(self):
        prob = ProblemSpec((0.25,), (F.gaussian(),))
        grids = [Grid1D(8.0, 64 * 2**k, 1e-3, 0.5) for k in range(3)]
        study = convergence_study(prob, grids, lambda x: heat_gauss(0.25, x, 0.5), x_max=4.0)
        assert study["kind"] == "reference"
        assert all(1.8 <= o <= 2.2 for o in study["orders"])

    def test_time_order(self):
        prob = ProblemSpec((0.25,), (F.gaussian(),))
        grids = [Grid1D(8.0, 512, 0.1 / 2**k, 0.5) for k in range(4)]
        study = convergence_study(prob, grids)
        assert study["kind"] == "richardson"
        assert all(1.8 <= o <= 2.2 for o in study["orders"])

    def test_needs_three_grids(self):
        with pytest.raises(ValueError):
            convergence_study(ProblemSpec((0.25,), (F.gaussian(),)), [Grid1D(8.0, 64, 0.1, 0.5)] * 2)


class TestTwoDimensional:
    def test_against_product_closed_form(self):
        g = (0.1, 0.3)
        res = fd_solve_2d(ProblemSpec(g, (F.gaussian(2),)), Grid1D(8.0, 128, 1e-2, 0.5))
        u = res.final.reshape(129, 129)
        x = res.grid.x
        ref = np.outer(heat_gauss(g[0], x, 0.5), heat_gauss(g[1], x, 0.5))
        assert np.max(np.abs(u - ref)) <= 5e-4

    def test_rejects_wrong_shape(self):
        with pytest.raises(ValueError):
            fd_solve_2d(ProblemSpec((0.1,), (F.gaussian(),)), Grid1D(8.0, 64, 0.1, 0.5))

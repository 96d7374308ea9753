"""Crank-Nicolson finite-difference oracle for the singular heat cascade.

Independent of the kernel formulas: it discretizes ``u_t = B_g u + f`` on
``[0, L]`` directly.  At ``x = 0`` the even-limit row ``(2g+2) u_xx`` with the
reflection ``u_{-1} = u_1`` is used; at ``x = L`` a Dirichlet value is
imposed.  Second-order problems are solved as the cascade

    (d/dt - B) W_1 = f,   W_1(0) = phi_1 - B phi_0,
    (d/dt - B) W_0 = W_1, W_0(0) = phi_0,

with ``u = W_0``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field as dc_field
from typing import Callable, Sequence

import numpy as np
from scipy import sparse
from scipy.sparse.linalg import splu

from .bessel_diffop import ProblemSpec, apply_B
from .fields import Source

__all__ = [
    "Grid1D",
    "FDResult",
    "InstabilityError",
    "bessel_matrix",
    "fd_solve",
    "fd_solve_2d",
    "weighted_mass",
    "conserved_mass_weights",
    "observed_order",
    "convergence_study",
]

_GROWTH_LIMIT = 1e6


class InstabilityError(FloatingPointError):
    """The discrete solution grew beyond the allowed factor."""


@dataclass(frozen=True)
class Grid1D:
    """Uniform grid ``x_i = i L / N`` on ``[0, L]`` with time step ``dt`` up to ``T``."""

    L: float
    N: int
    dt: float
    T: float

    def __post_init__(self):
        if not self.L > 0:
            raise ValueError("L must be positive")
        if self.N < 64:
            raise ValueError("N must be at least 64")
        if not (self.dt > 0 and self.T > 0):
            raise ValueError("dt and T must be positive")

    @property
    def h(self) -> float:
        return self.L / self.N

    @property
    def x(self) -> np.ndarray:
        return np.arange(self.N + 1) * self.h

    @property
    def steps(self) -> int:
        return max(1, round(self.T / self.dt))

    @property
    def explicit_bound(self) -> float:
        """Forward-Euler bound ``h^2 / 2`` of the interior stencil; Crank-Nicolson needs none."""
        return self.h**2 / 2


@dataclass
class FDResult:
    grid: Grid1D
    times: np.ndarray
    history: np.ndarray  # shape (len(times), N + 1)
    components: dict = dc_field(default_factory=dict)

    @property
    def final(self) -> np.ndarray:
        return self.history[-1]


def bessel_matrix(gamma: float, N: int, h: float) -> sparse.csr_matrix:
    """Tridiagonal ``B_g`` on nodes ``0..N`` (the last row is left empty for Dirichlet)."""
    i = np.arange(1, N)
    x = i * h
    c = (2 * gamma + 1) / x
    lower = 1 / h**2 - c / (2 * h)
    upper = 1 / h**2 + c / (2 * h)
    main = np.full(N + 1, -2 / h**2)
    main[0] = -2 * (2 * gamma + 2) / h**2
    main[N] = 0.0
    up = np.zeros(N)
    lo = np.zeros(N)
    up[0] = 2 * (2 * gamma + 2) / h**2
    up[1:] = upper
    lo[:-1] = lower
    return sparse.diags([lo, main, up], [-1, 0, 1], format="csr")


class _CNStepper:
    def __init__(self, gamma: float, grid: Grid1D):
        N, h, dt = grid.N, grid.h, grid.dt
        A = bessel_matrix(gamma, N, h)
        eye = sparse.identity(N + 1, format="csr")
        lhs = (eye - 0.5 * dt * A).tolil()
        lhs[N, :] = 0.0
        lhs[N, N] = 1.0
        try:
            self.lu = splu(lhs.tocsc())
        except RuntimeError as exc:
            raise np.linalg.LinAlgError(f"singular Crank-Nicolson matrix: {exc}") from exc
        self.rhs = (eye + 0.5 * dt * A).tocsr()
        self.dt = dt
        self.N = N

    def step(self, u, f_old, f_new, far_new):
        b = self.rhs @ u + 0.5 * self.dt * (f_old + f_new)
        b[self.N] = far_new
        return self.lu.solve(b)


def _as_far(value) -> Callable[[float], float]:
    if value is None:
        return lambda t: 0.0
    if callable(value):
        return value
    return lambda t, v=float(value): v


def _source_values(source: Source | None, x: np.ndarray, t: float) -> np.ndarray:
    if source is None:
        return np.zeros_like(x)
    return np.asarray(source(x[:, None], t), dtype=float)


def fd_solve(
    problem: ProblemSpec,
    grid: Grid1D,
    far_values: Sequence | None = None,
    save_times: Sequence[float] | None = None,
) -> FDResult:
    """Crank-Nicolson solution of the ``n = 1``, ``m <= 2`` problem.

    ``far_values`` gives the Dirichlet data at ``x = L`` per cascade level
    (``[u]`` for ``m = 1``, ``[W_0, W_1]`` for ``m = 2``): constants or
    callables of ``t``; the default is zero.  ``save_times`` selects
    snapshots (default: initial and final time).
    """
    if problem.n != 1:
        raise ValueError("fd_solve handles n = 1; use fd_solve_2d for two axes")
    m = problem.m
    if m > 2:
        raise ValueError("the oracle supports m <= 2")
    gamma = problem.gamma.gamma[0]
    x = grid.x
    pts = x[:, None]
    far = [_as_far(v) for v in (far_values or [None] * m)]
    if len(far) != m:
        raise ValueError("far_values needs one entry per cascade level")
    stepper = _CNStepper(gamma, grid)
    src = problem.source
    if m == 1:
        levels = [np.asarray(problem.phis[0].evaluate(pts), dtype=float)]
    else:
        w1 = problem.phis[1].evaluate(pts) - apply_B(gamma, problem.phis[0], 0, pts)
        levels = [np.asarray(problem.phis[0].evaluate(pts), dtype=float), np.asarray(w1, dtype=float)]
    for lv, fv in zip(levels, far):
        lv[-1] = fv(0.0)

    steps = grid.steps
    dt = grid.dt
    wanted = sorted(set([0.0, steps * dt] if save_times is None else list(save_times)))
    save_idx = {min(steps, round(s / dt)) for s in wanted}
    times, snaps = [], []
    scale = max(1.0, max(float(np.max(np.abs(lv))) for lv in levels))
    if 0 in save_idx:
        times.append(0.0)
        snaps.append(levels[0].copy())
    f_old = _source_values(src, x, 0.0)
    for k in range(1, steps + 1):
        t_new = k * dt
        f_new = _source_values(src, x, t_new)
        if m == 1:
            levels[0] = stepper.step(levels[0], f_old, f_new, far[0](t_new))
        else:
            w1_new = stepper.step(levels[1], f_old, f_new, far[1](t_new))
            levels[0] = stepper.step(levels[0], levels[1], w1_new, far[0](t_new))
            levels[1] = w1_new
        f_old = f_new
        peak = float(np.max(np.abs(levels[0])))
        if not np.isfinite(peak) or peak > _GROWTH_LIMIT * scale:
            raise InstabilityError(f"solution norm {peak:.3e} exceeded {_GROWTH_LIMIT:g} x initial at t={t_new:g}")
        if k in save_idx:
            times.append(t_new)
            snaps.append(levels[0].copy())
    comps = {"W1": levels[1].copy()} if m == 2 else {}
    return FDResult(grid, np.array(times), np.array(snaps), comps)


def fd_solve_2d(problem: ProblemSpec, grid: Grid1D) -> FDResult:
    """Peaceman-Rachford splitting for ``n = 2``, ``m = 1`` on ``[0, L]^2``.

    Far edges carry zero Dirichlet data, so it is meant for decaying
    (typically separable) data.  ``history`` holds the final field flattened
    in C order over ``(x_1, x_2)``.
    """
    if problem.n != 2 or problem.m != 1:
        raise ValueError("fd_solve_2d handles n = 2, m = 1")
    g1, g2 = problem.gamma.gamma
    N, h, dt = grid.N, grid.h, grid.dt
    x = grid.x
    X1, X2 = np.meshgrid(x, x, indexing="ij")
    pts = np.stack([X1, X2], axis=-1)
    u = np.asarray(problem.phis[0].evaluate(pts), dtype=float)
    eye = sparse.identity(N + 1, format="csr")
    ops = []
    for g in (g1, g2):
        A = bessel_matrix(g, N, h)
        lhs = (eye - 0.5 * dt * A).tolil()
        lhs[N, :] = 0.0
        lhs[N, N] = 1.0
        ops.append((splu(lhs.tocsc()), (eye + 0.5 * dt * A).tocsr()))
    (lu1, r1), (lu2, r2) = ops
    src = problem.source

    def f_at(t):
        if src is None:
            return np.zeros_like(u)
        return np.asarray(src(pts, t), dtype=float)

    for k in range(1, grid.steps + 1):
        t_half = (k - 0.5) * dt
        fh = f_at(t_half)
        # implicit in x_1, explicit in x_2
        b = (r2 @ u.T).T + 0.5 * dt * fh
        b[N, :] = 0.0
        half = lu1.solve(b)
        half[:, N] = 0.0
        # implicit in x_2, explicit in x_1
        b = r1 @ half + 0.5 * dt * fh
        b[:, N] = 0.0
        u = lu2.solve(b.T).T
        u[N, :] = 0.0
        if not np.all(np.isfinite(u)) or np.max(np.abs(u)) > _GROWTH_LIMIT:
            raise InstabilityError(f"2-D solution blew up at t={k * dt:g}")
    return FDResult(grid, np.array([grid.steps * dt]), u.reshape(1, -1))


def weighted_mass(u: np.ndarray, gamma: float, h: float) -> float:
    """``int_0^L u x^{2g+1} dx`` for the nodal values ``u``.

    Each cell's integral treats ``u`` as linear and integrates the weight
    exactly, so the singular factor at ``x = 0`` is handled without error.
    """
    p = 2 * gamma + 1
    x = np.arange(len(u)) * h
    a, b = x[:-1], x[1:]
    m0 = (b ** (p + 1) - a ** (p + 1)) / (p + 1)
    m1 = (b ** (p + 2) - a ** (p + 2)) / (p + 2)
    wb = (m1 - a * m0) / h
    wa = m0 - wb
    return float(np.dot(wa, u[:-1]) + np.dot(wb, u[1:]))


def conserved_mass_weights(gamma: float, N: int, h: float) -> np.ndarray:
    """Nodal weights ``mu`` with ``mu^T B_h = 0`` on every column but the last two.

    ``mu . u`` is the discrete counterpart of the weighted mass and is
    conserved by the scheme up to the flux through ``x = L``.  Normalized so
    that ``mu_i ~ x_i^{2g+1} h`` away from the origin.
    """
    A = bessel_matrix(gamma, N, h).tocsc()
    mu = np.zeros(N + 1)
    mu[0] = 1.0
    mu[1] = -mu[0] * A[0, 0] / A[1, 0]
    for j in range(1, N - 1):
        mu[j + 1] = -(mu[j - 1] * A[j - 1, j] + mu[j] * A[j, j]) / A[j + 1, j]
    x = np.arange(N + 1) * h
    k = N // 2
    return mu * (x[k] ** (2 * gamma + 1) * h / mu[k])


def observed_order(errors: Sequence[float], ratio: float = 2.0) -> list[float]:
    """``log(e_i / e_{i+1}) / log(ratio)`` for successive refinements."""
    return [math.log(errors[i] / errors[i + 1]) / math.log(ratio) for i in range(len(errors) - 1)]


def convergence_study(
    problem: ProblemSpec,
    grids: Sequence[Grid1D],
    reference: Callable[[np.ndarray], np.ndarray] | None = None,
    x_max: float | None = None,
    far_values=None,
) -> dict:
    """Observed order over nested grids (each halving ``h`` or ``dt``).

    With ``reference`` (a function of the node array giving the exact final
    state) the errors are measured against it.  Otherwise successive
    solutions are differenced at the coarsest grid's nodes (Richardson).
    """
    if len(grids) < 3:
        raise ValueError("a convergence study needs at least 3 grids")
    sols = [fd_solve(problem, g, far_values) for g in grids]
    coarse = grids[0]
    x_max = coarse.L if x_max is None else x_max
    xc = coarse.x[coarse.x <= x_max + 1e-12]

    def sample(res):
        stride = res.grid.N // coarse.N
        return res.final[: len(xc) * stride : stride][: len(xc)]

    if reference is not None:
        ref = reference(xc)
        errors = [float(np.max(np.abs(sample(s) - ref))) for s in sols]
        kind = "reference"
    else:
        vals = [sample(s) for s in sols]
        errors = [float(np.max(np.abs(vals[i] - vals[i + 1]))) for i in range(len(vals) - 1)]
        kind = "richardson"
    ratio = (grids[0].h / grids[1].h) if grids[0].h != grids[1].h else (grids[0].dt / grids[1].dt)
    return {"kind": kind, "errors": errors, "orders": observed_order(errors, ratio)}

"""Numerical toolkit for the singular polycaloric equation with Bessel operators.

Modules
-------
numerics       special functions and quadrature rules
fields         scalar fields and the analytic field catalog
bessel_diffop  Bessel operators, Cauchy data and its validation
ek_ops         Erdelyi-Kober operators with Bessel-Clifford kernels
kernel         singular heat-kernel weight and its identities
solver         closed-form solution evaluator and verification
fd_oracle      Crank-Nicolson cross-check
"""

from .bessel_diffop import GammaVec, ProblemSpec, validate_initial_data
from .ek_ops import EKParams, ek_apply, ek_inverse_generalized, ek_inverse_plain
from .kernel import KernelWeight, g0, weight
from .numerics import QuadratureError, QuadSpec
from .solver import SolutionEvaluator, solve_full, solve_homogeneous, solve_inhomogeneous, verify

__version__ = "0.1.0"

__all__ = [
    "GammaVec",
    "ProblemSpec",
    "validate_initial_data",
    "EKParams",
    "ek_apply",
    "ek_inverse_generalized",
    "ek_inverse_plain",
    "KernelWeight",
    "g0",
    "weight",
    "QuadSpec",
    "QuadratureError",
    "SolutionEvaluator",
    "solve_full",
    "solve_homogeneous",
    "solve_inhomogeneous",
    "verify",
]

"""Numerical laboratory for stationary Gierer-Meinhardt systems on (0, 1)."""

__version__ = "0.1.0"

from .bvp_solver import (ProblemSpec, SolutionPair, auxiliary_profiles, continue_in_epsilon,
                         shoot_residual, solve_fd_newton, solve_shooting, solve_xi, solve_zeta)
from .criteria import (check_a1, check_a2, classify_exponents, nonexistence_integral_test)
from .nonlinearity import KFunction, NonlinearityQuad, PowerExponents
from .psi_profile import (build_profile, endpoint_a, phi_of, psi_asymptotic, psi_of,
                          verify_psi_ode)
from .analysis import boundary_rate, residual_norm, uniqueness_probe, verify_bounds

__all__ = [
    "ProblemSpec", "SolutionPair", "auxiliary_profiles", "continue_in_epsilon",
    "shoot_residual", "solve_fd_newton", "solve_shooting", "solve_xi", "solve_zeta",
    "check_a1", "check_a2", "classify_exponents", "nonexistence_integral_test",
    "KFunction", "NonlinearityQuad", "PowerExponents",
    "build_profile", "endpoint_a", "phi_of", "psi_asymptotic", "psi_of", "verify_psi_ode",
    "boundary_rate", "residual_norm", "uniqueness_probe", "verify_bounds",
]

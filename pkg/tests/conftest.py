import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from gmlab.bvp_solver import ProblemSpec, auxiliary_profiles, solve_fd_newton, solve_shooting  # noqa: E402

REF_N = 2048


@pytest.fixture(scope="session")
def ref_spec():
    return {0: ProblemSpec.reference(0.0), 2: ProblemSpec.reference(2.0)}


@pytest.fixture(scope="session")
def ref_shoot(ref_spec):
    return {sg: solve_shooting(sp, n=REF_N) for sg, sp in ref_spec.items()}


@pytest.fixture(scope="session")
def ref_fd(ref_spec):
    return {sg: solve_fd_newton(sp, n=REF_N) for sg, sp in ref_spec.items()}


@pytest.fixture(scope="session")
def ref_aux(ref_spec):
    return {sg: auxiliary_profiles(sp, REF_N) for sg, sp in ref_spec.items()}

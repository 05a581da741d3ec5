import dataclasses

import numpy as np
import pytest

import oracles
from gmlab.analysis import (boundary_rate, hypothesis_applies, residual_norm, sample_starts,
                            uniqueness_probe, verify_bounds)
from gmlab.bvp_solver import (ProblemSpec, SineSource, SolutionPair, auxiliary_profiles,
                              solve_fd_newton, solve_shooting, solve_zeta, uniform_grid)
from gmlab.errors import DegenerateProfile, DomainError, GridMismatch
from gmlab.nonlinearity import PowerExponents


def with_exponents(p, q, sigma, **kw):
    return ProblemSpec(kw.get("alpha", 1.0), kw.get("beta", 0.5), kw.get("epsilon", 1e-2),
                       exponents=PowerExponents.from_sigma(p, q, sigma))


class TestBounds:
    @pytest.mark.parametrize("sigma", [0, 2])
    def test_reference_case_pass(self, ref_shoot, ref_fd, ref_aux, sigma):
        for sol in (ref_shoot[sigma], ref_fd[sigma]):
            rep = verify_bounds(sol, ref_aux[sigma])
            assert rep.overall, rep.failed()
            assert len(rep.checks) == 5

    def test_scaled_u_fails(self, ref_shoot, ref_aux):
        sol = ref_shoot[0]
        # a quarter of u has a smaller boundary slope than zeta
        bad = dataclasses.replace(sol, u=0.25 * sol.u)
        rep = verify_bounds(bad, ref_aux[0])
        assert not rep.overall
        assert "zeta<=u" in rep.failed()
        worst = next(c for c in rep.checks if c.name == "zeta<=u")
        assert 0 < worst.worst_node < 1
        assert worst.worst_slack < -1e-8

    def test_linear_mode_equality(self):
        spec = dataclasses.replace(ProblemSpec.reference(), test_mode=True)
        sol = solve_fd_newton(spec, n=512)
        aux = auxiliary_profiles(spec, 512)
        assert np.all(aux.xi == 0.0)
        checks = {c.name: c for c in verify_bounds(sol, aux).checks}
        assert checks["zeta<=u"].passed and abs(checks["zeta<=u"].worst_slack) <= 1e-14
        assert checks["xi<=v"].passed

    def test_grid_mismatch(self, ref_shoot):
        aux = auxiliary_profiles(ProblemSpec.reference(), 1024)
        with pytest.raises(GridMismatch):
            verify_bounds(ref_shoot[0], aux)


class TestBoundaryRate:
    def test_zeta_converges_to_slope(self):
        n = 4096
        x = uniform_grid(n)
        z = solve_zeta(1.0, SineSource(), n)
        rate = boundary_rate(z, x, window=0.02)
        target = oracles.zeta_slope()
        assert rate.c1 == pytest.approx(target, rel=0.02)
        assert rate.c2 == pytest.approx(target, rel=0.02)

    def test_first_order_in_window(self):
        x = uniform_grid(4096)
        z = np.sin(np.pi * x) / (1 + np.pi ** 2)
        target = oracles.zeta_slope()
        gaps = [target - boundary_rate(z, x, window=w).c1 for w in (0.04, 0.02, 0.01)]
        # sin(pi d)/d loses pi^2 d^2/6, so the gap shrinks at least linearly
        assert gaps[0] > gaps[1] > gaps[2] > 0
        assert gaps[1] <= 0.5 * gaps[0]

    def test_zero_profile(self):
        with pytest.raises(DegenerateProfile):
            boundary_rate(np.zeros(1025))

    def test_too_few_nodes(self):
        with pytest.raises(DegenerateProfile):
            boundary_rate(np.sin(np.pi * uniform_grid(64)), window=0.05)

    def test_sides(self):
        x = uniform_grid(2048)
        vals = x * (1 - x) * (1 + x)
        left = boundary_rate(vals, x, side="left")
        right = boundary_rate(vals, x, side="right")
        both = boundary_rate(vals, x)
        assert left.c2 == pytest.approx(1.0, abs=0.06)
        assert right.c2 == pytest.approx(2.0, abs=0.01)
        assert both.c1 == min(left.c1, right.c1) and both.c2 == max(left.c2, right.c2)
        assert both.ratio == both.c2 / both.c1


class TestResidual:
    def test_fd_solution(self):
        spec = ProblemSpec.reference()
        sol = solve_fd_newton(spec, n=1024)
        assert residual_norm(sol, spec) <= 1e-10

    def test_zero_state(self):
        spec = ProblemSpec.reference()
        x = uniform_grid(256)
        zero = SolutionPair(x, np.zeros_like(x), np.zeros_like(x), None)
        # residual at the zero state is rho + f(eps)/g(eps) = sin(pi x) + 1
        assert residual_norm(zero, spec) == pytest.approx(2.0, abs=1e-4)


class TestUniqueness:
    def test_starts_deterministic(self):
        a, b = sample_starts(20, 3), sample_starts(20, 3)
        assert np.array_equal(a, b)
        assert a.min() >= 0.1 and a.max() <= 10.0

    def test_hypothesis_flag(self):
        assert hypothesis_applies(with_exponents(1, 1, 0))
        assert hypothesis_applies(with_exponents(1, 0.5, 1))
        assert not hypothesis_applies(with_exponents(1.5, 0.5, 0))

    def test_single_cluster(self):
        rep = uniqueness_probe(ProblemSpec.reference(), n_starts=10, seed=7)
        assert rep.n_clusters == 1
        assert rep.failed == 0 and rep.rejected == 0
        assert rep.clusters[0].spread <= 1e-6
        assert len(rep.rows) == 10
        assert {r[4] for r in rep.rows} == {0}

    def test_outside_hypothesis_reports(self):
        rep = uniqueness_probe(with_exponents(1.5, 0.5, 0), n_starts=10, seed=1)
        assert rep.hypothesis_applies is False
        assert rep.as_dict()["n_starts"] == 10

    def test_needs_ten_starts(self):
        with pytest.raises(ValueError):
            uniqueness_probe(ProblemSpec.reference(), n_starts=5)

    def test_needs_positive_epsilon(self):
        with pytest.raises(DomainError):
            uniqueness_probe(ProblemSpec.reference(epsilon=0.0))

    def test_failed_runs_recorded(self, monkeypatch):
        import gmlab.analysis as an
        from gmlab.errors import NoConvergence

        real = an.solve_shooting
        calls = {"n": 0}

        def flaky(spec, start, n):
            calls["n"] += 1
            if calls["n"] % 2:
                raise NoConvergence("forced", best_residual=1.0, last=None, iterations=0)
            return real(spec, start, n=n)

        monkeypatch.setattr(an, "solve_shooting", flaky)
        rep = uniqueness_probe(ProblemSpec.reference(), n_starts=10, seed=2)
        assert rep.failed == 5
        assert rep.n_clusters == 1
        assert sum(r[4] == -1 for r in rep.rows) == 5

"""Steady states of the regularized activator-inhibitor system on (0, 1).

    u'' - alpha u + (u+eps)^p / (v+eps)^q + rho(x) = 0
    v'' - beta  v + (u+eps)^r / (v+eps)^s          = 0,   u = v = 0 at x = 0, 1

Two independent routes are provided: shooting on the initial slopes with a
Broyden root finder, and a second-order finite-difference discretization
solved by damped Newton.  The auxiliary problems for the sub-solutions
``zeta`` and ``xi`` share the finite-difference machinery.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy import linalg, sparse
from scipy.sparse import linalg as splinalg

from . import ivp
from .broyden import broyden_solve
from .errors import (BlowUp, DomainError, JacobianSingular, NewtonStall, NoConvergence,
                     SingularMatrix)
from .nonlinearity import KFunction, PowerExponents

IVP_TOL = 1e-10
SHOOT_TOL = 1e-9
FD_TOL = 1e-10
STATE_CAP = 1e8
EPS = np.finfo(float).eps


@dataclass(frozen=True)
class SineSource:
    """``rho(x) = amplitude * sin(mode * pi * x)``."""

    amplitude: float = 1.0
    mode: int = 1

    def __call__(self, x):
        if isinstance(x, float):
            return self.amplitude * math.sin(self.mode * math.pi * x)
        return self.amplitude * np.sin(self.mode * np.pi * np.asarray(x, dtype=float))


@dataclass(frozen=True)
class ConstantSource:
    value: float = 1.0

    def __call__(self, x):
        if isinstance(x, float):
            return self.value
        return np.full(np.shape(x), self.value, dtype=float)


@dataclass(frozen=True)
class ProblemSpec:
    """One instance of the regularized system.

    ``test_mode`` switches off both coupling terms (f = h = 0); it exists only
    so that closed-form linear solutions can serve as oracles.
    """

    alpha: float
    beta: float
    epsilon: float
    rho: Callable = SineSource()
    exponents: PowerExponents = PowerExponents.from_sigma(1.0, 1.0, 0.0)
    test_mode: bool = False

    def __post_init__(self):
        if not self.alpha > 0:
            raise DomainError(f"alpha must be positive, got {self.alpha}")
        if not self.beta > 0:
            raise DomainError(f"beta must be positive, got {self.beta}")
        if not self.epsilon >= 0:
            raise DomainError(f"epsilon must be nonnegative, got {self.epsilon}")
        probe = np.asarray(self.rho(np.linspace(0.0, 1.0, 65)), dtype=float)
        if np.any(probe < 0):
            raise DomainError("rho must be nonnegative")
        if not np.any(probe > 0):
            raise DomainError("rho must not vanish identically")

    @classmethod
    def reference(cls, sigma: float = 0.0, epsilon: float = 1e-2) -> "ProblemSpec":
        return cls(1.0, 0.5, epsilon, SineSource(), PowerExponents.from_sigma(1.0, 1.0, sigma))

    def with_epsilon(self, epsilon: float) -> "ProblemSpec":
        return dataclasses.replace(self, epsilon=epsilon)

    def require_regular(self):
        if not self.epsilon > 0:
            raise DomainError("solvers need epsilon > 0; the singular limit is "
                              "reached only through continuation")

    def coupling(self, u, v):
        """Return ``(F, H, dF/du, dF/dv, dH/du, dH/dv)`` on arrays.

        Arguments below ``-eps/2`` are clamped there, so powers stay real.
        """
        u = np.asarray(u, dtype=float)
        v = np.asarray(v, dtype=float)
        if self.test_mode:
            z = np.zeros(np.broadcast(u, v).shape)
            return z, z, z, z, z, z
        eps = self.epsilon
        p, q, r, s = self.exponents.as_tuple()
        uu = np.maximum(u, -0.5 * eps) + eps
        vv = np.maximum(v, -0.5 * eps) + eps
        cu = (u > -0.5 * eps).astype(float)
        cv = (v > -0.5 * eps).astype(float)
        F = uu ** p / vv ** q
        H = uu ** r / vv ** s
        return F, H, cu * p * F / uu, -cv * q * F / vv, cu * r * H / uu, -cv * s * H / vv


@dataclass
class SolveMeta:
    method: str
    residual_norm: float
    iterations: int
    epsilon_used: float
    tolerance: float
    slopes: Optional[tuple] = None
    end_slopes: Optional[tuple] = None
    extras: dict = field(default_factory=dict)


@dataclass(frozen=True)
class SolutionPair:
    grid: np.ndarray
    u: np.ndarray
    v: np.ndarray
    meta: SolveMeta

    @property
    def w(self) -> np.ndarray:
        return self.u - self.v

    def sup_norms(self):
        return float(np.max(np.abs(self.u))), float(np.max(np.abs(self.v)))

    def violations(self) -> list:
        """List the broken invariants; empty for a valid solution."""
        bad = []
        if max(abs(self.u[0]), abs(self.u[-1]), abs(self.v[0]), abs(self.v[-1])) > 1e-12:
            bad.append("nonzero boundary values")
        if np.any(self.u[1:-1] <= 0) or np.any(self.v[1:-1] <= 0):
            bad.append("non-positive interior values")
        if not self.meta.residual_norm <= self.meta.tolerance:
            bad.append("residual above tolerance")
        return bad


@dataclass(frozen=True)
class AuxProfiles:
    grid: np.ndarray
    zeta: np.ndarray
    xi: np.ndarray
    phi1: np.ndarray
    lambda1: float = math.pi ** 2


def uniform_grid(n: int) -> np.ndarray:
    """``n`` intervals, ``n + 1`` nodes including both endpoints."""
    return np.linspace(0.0, 1.0, n + 1)


def _second_diff(vals, grid):
    h = np.diff(grid)
    hl, hr = h[:-1], h[1:]
    return 2.0 * ((vals[2:] - vals[1:-1]) / hr - (vals[1:-1] - vals[:-2]) / hl) / (hl + hr)


def fd_residual(grid, u, v, spec: ProblemSpec):
    """Finite-difference residuals of both equations at interior nodes."""
    F, H, *_ = spec.coupling(u[1:-1], v[1:-1])
    rho = np.asarray(spec.rho(grid[1:-1]), dtype=float)
    ru = _second_diff(u, grid) - spec.alpha * u[1:-1] + F + rho
    rv = _second_diff(v, grid) - spec.beta * v[1:-1] + H
    return ru, rv


def rounding_floor(vals, h: float) -> float:
    """Size of the second-difference residual caused by storing ``vals`` in doubles."""
    return 8.0 * EPS * float(np.max(np.abs(vals))) / (h * h)


def _laplacian(n: int, h: float):
    m = n - 1
    return sparse.diags([np.full(m - 1, 1.0), np.full(m, -2.0), np.full(m - 1, 1.0)],
                        [-1, 0, 1], format="csc") / (h * h)


def boundary_slope(vals, grid, side="left") -> float:
    """Second-order one-sided derivative at an endpoint."""
    if side == "left":
        h = grid[1] - grid[0]
        return (-3.0 * vals[0] + 4.0 * vals[1] - vals[2]) / (2.0 * h)
    h = grid[-1] - grid[-2]
    return (3.0 * vals[-1] - 4.0 * vals[-2] + vals[-3]) / (2.0 * h)


# ---------------------------------------------------------------------------
# auxiliary problems

def solve_zeta(alpha: float, rho, n: int = 1024) -> np.ndarray:
    """Solve ``zeta'' - alpha zeta + rho = 0`` with zero boundary values."""
    if not alpha > 0:
        raise DomainError(f"alpha must be positive, got {alpha}")
    if n < 64:
        raise DomainError(f"need n >= 64 intervals, got {n}")
    x = uniform_grid(n)
    h = 1.0 / n
    m = n - 1
    ab = np.empty((3, m))
    ab[0, :] = -1.0
    ab[1, :] = 2.0 + alpha * h * h
    ab[2, :] = -1.0
    rhs = h * h * np.asarray(rho(x[1:-1]), dtype=float)
    try:
        inner = linalg.solve_banded((1, 1), ab, rhs)
    except (linalg.LinAlgError, ValueError) as exc:
        raise SingularMatrix(str(exc)) from exc
    # relative backward error of the tridiagonal system
    res = ab[1] * inner - rhs
    res[1:] -= inner[:-1]
    res[:-1] -= inner[1:]
    scale = (4.0 + alpha * h * h) * np.max(np.abs(inner)) + np.max(np.abs(rhs))
    if scale > 0 and np.max(np.abs(res)) > 1e-12 * scale:
        raise SingularMatrix("tridiagonal solve lost accuracy")
    return np.concatenate([[0.0], inner, [0.0]])


def _k_prime(k: KFunction, t):
    s = k.power_exponent
    if s is not None:
        return s * np.power(t, s - 1.0)
    d = 1e-6 * np.maximum(1.0, np.abs(t))
    return (np.array([float(k(a)) for a in t + d]) - np.array([float(k(a)) for a in t - d])) / (2 * d)


def _k_vec(k: KFunction, t):
    if k.power_exponent is not None:
        return np.power(t, k.power_exponent)
    return np.array([float(k(a)) for a in t])


def solve_xi(beta: float, source, k: KFunction, n: int = 1024, tol: float = FD_TOL,
             max_iter: int = 100) -> np.ndarray:
    """Solve ``xi'' - beta xi + source / k(xi + 1) = 0`` by damped Newton.

    ``source`` holds nodal values of ``h(zeta)`` on the uniform grid with
    ``n`` intervals.
    """
    if not beta > 0:
        raise DomainError(f"beta must be positive, got {beta}")
    src = np.asarray(source, dtype=float)
    if src.shape != (n + 1,):
        raise DomainError(f"source must have {n + 1} nodal values")
    if np.any(src < 0):
        raise DomainError("source must be nonnegative")
    h = 1.0 / n
    S = src[1:-1]
    L = _laplacian(n, h)
    xi = np.zeros(n - 1)

    def resid(z):
        return L @ z - beta * z + S / _k_vec(k, z + 1.0)

    R = resid(xi)
    norm = float(np.max(np.abs(R)))
    for _ in range(max_iter):
        if norm <= max(tol, rounding_floor(xi, h)):
            break
        kz = _k_vec(k, xi + 1.0)
        diag = -beta - S * _k_prime(k, xi + 1.0) / kz ** 2
        J = L + sparse.diags(diag, format="csc")
        step = splinalg.spsolve(J, -R)
        lam = 1.0
        while True:
            trial = xi + lam * step
            Rt = resid(trial)
            nt = float(np.max(np.abs(Rt)))
            if nt < norm or nt <= tol:
                break
            lam *= 0.5
            if lam < 1e-12:
                raise NewtonStall(f"damping underflow at residual {norm:.3g}")
        xi, R, norm = trial, Rt, nt
    else:
        raise NewtonStall(f"no convergence in {max_iter} iterations, residual {norm:.3g}")
    return np.concatenate([[0.0], xi, [0.0]])


def auxiliary_profiles(spec: ProblemSpec, n: int = 1024) -> AuxProfiles:
    """``zeta``, ``xi``, ``phi_1 = sin(pi x)`` and ``lambda_1`` on the shared grid."""
    x = uniform_grid(n)
    zeta = solve_zeta(spec.alpha, spec.rho, n)
    if spec.test_mode:
        src = np.zeros_like(zeta)
    else:
        src = np.power(zeta, spec.exponents.r)
    xi = solve_xi(spec.beta, src, KFunction.power(spec.exponents.s), n)
    return AuxProfiles(x, zeta, xi, np.sin(np.pi * x))


# ---------------------------------------------------------------------------
# shooting

def _make_rhs(spec: ProblemSpec):
    alpha, beta, eps = float(spec.alpha), float(spec.beta), float(spec.epsilon)
    p, q, r, s = (float(e) for e in spec.exponents.as_tuple())
    rho = spec.rho
    floor = -0.5 * eps

    if spec.test_mode:
        def rhs(x, y):
            return (y[1], alpha * y[0] - rho(x), y[3], beta * y[2])
        return rhs

    def rhs(x, y):
        u, du, v, dv = y
        uu = (u if u > floor else floor) + eps
        vv = (v if v > floor else floor) + eps
        return (du, alpha * u - uu ** p / vv ** q - rho(x),
                dv, beta * v - uu ** r / vv ** s)
    return rhs


def shoot(slopes, spec: ProblemSpec, ivp_tol: float = IVP_TOL,
          state_cap: float = STATE_CAP) -> ivp.Trajectory:
    """Integrate from ``x = 0`` with zero values and the given initial slopes."""
    spec.require_regular()
    rhs = _make_rhs(spec)
    y0 = (0.0, float(slopes[0]), 0.0, float(slopes[1]))
    return ivp.integrate(rhs, 0.0, y0, 1.0, rtol=ivp_tol, atol=ivp_tol * 1e-2,
                         state_cap=state_cap)


def shoot_residual(slopes, spec: ProblemSpec, ivp_tol: float = IVP_TOL) -> np.ndarray:
    """Terminal values ``(u(1), v(1))``; raises BlowUp on escape."""
    yend = shoot(slopes, spec, ivp_tol).final
    return np.array([yend[0], yend[2]])


def default_slopes(spec: ProblemSpec, n: int = 1024):
    """Initial slopes from the sub-solutions: ``(zeta'(0) + eps, xi'(0) + eps)``."""
    aux = auxiliary_profiles(spec, n)
    return (boundary_slope(aux.zeta, aux.grid) + spec.epsilon,
            boundary_slope(aux.xi, aux.grid) + spec.epsilon)


def solve_shooting(spec: ProblemSpec, init_slopes=None, n: int = 2048,
                   ivp_tol: float = IVP_TOL, tol: float = SHOOT_TOL,
                   max_iter: int = 200) -> SolutionPair:
    """Shooting plus Broyden; the result is sampled on ``n`` uniform intervals."""
    spec.require_regular()
    if init_slopes is None:
        init_slopes = default_slopes(spec)
    res = broyden_solve(lambda a: shoot_residual(a, spec, ivp_tol), init_slopes,
                        tol=tol, max_iter=max_iter)
    traj = shoot(res.x, spec, ivp_tol)
    x = uniform_grid(n)
    u, v = traj.sample(x)
    # remove the terminal miss with a linear ramp, which has no second difference
    u = u - x * u[-1]
    v = v - x * v[-1]
    u[0] = v[0] = u[-1] = v[-1] = 0.0
    yend = traj.final
    meta = SolveMeta("Shooting", res.residual, res.iterations, spec.epsilon, tol,
                     slopes=(float(res.x[0]), float(res.x[1])),
                     end_slopes=(float(yend[1]), float(yend[3])),
                     extras={"nfev": res.nfev, "ivp_tol": ivp_tol,
                             "ivp_steps": traj.n_steps})
    return SolutionPair(x, u, v, meta)


# ---------------------------------------------------------------------------
# finite differences

def solve_fd_newton(spec: ProblemSpec, n: int = 1024, init: Optional[SolutionPair] = None,
                    tol: float = FD_TOL, max_iter: int = 100) -> SolutionPair:
    """Damped Newton with Armijo backtracking on the discretized system.

    Convergence means an infinity-norm residual at most ``tol``; on fine
    grids where storing the iterate in doubles alone produces a larger
    residual, the rounding floor of the second difference replaces ``tol``.
    The tolerance actually used is recorded in the metadata.
    """
    spec.require_regular()
    if n < 256:
        raise DomainError(f"need n >= 256 intervals, got {n}")
    x = uniform_grid(n)
    h = 1.0 / n
    if init is None:
        aux = auxiliary_profiles(spec, n)
        U = aux.zeta[1:-1].copy()
        V = np.maximum(aux.xi[1:-1], spec.epsilon)
    else:
        if len(init.grid) == n + 1 and np.allclose(init.grid, x):
            U, V = init.u[1:-1].copy(), init.v[1:-1].copy()
        else:
            U = np.interp(x, init.grid, init.u)[1:-1]
            V = np.interp(x, init.grid, init.v)[1:-1]
    L = _laplacian(n, h)
    m = n - 1
    rho = np.asarray(spec.rho(x[1:-1]), dtype=float)
    I = sparse.identity(m, format="csc")

    def residual(U, V):
        F, H, Fu, Fv, Hu, Hv = spec.coupling(U, V)
        ru = L @ U - spec.alpha * U + F + rho
        rv = L @ V - spec.beta * V + H
        return np.concatenate([ru, rv]), (Fu, Fv, Hu, Hv)

    R, derivs = residual(U, V)
    norm = float(np.max(np.abs(R)))
    it = 0
    eff_tol = tol
    for it in range(max_iter + 1):
        eff_tol = max(tol, rounding_floor(np.concatenate([U, V]), h))
        if norm <= eff_tol:
            break
        if it == max_iter:
            raise NewtonStall(f"no convergence in {max_iter} iterations, residual {norm:.3g}")
        Fu, Fv, Hu, Hv = derivs
        J = sparse.bmat([[L - spec.alpha * I + sparse.diags(Fu), sparse.diags(Fv)],
                         [sparse.diags(Hu), L - spec.beta * I + sparse.diags(Hv)]],
                        format="csc")
        try:
            step = splinalg.spsolve(J, -R)
        except RuntimeError as exc:
            raise JacobianSingular(str(exc), {"iteration": it, "residual": norm}) from exc
        if not np.all(np.isfinite(step)):
            raise JacobianSingular("Newton step is not finite", {"iteration": it, "residual": norm})
        l2 = float(np.linalg.norm(R))
        lam = 1.0
        while True:
            Ut, Vt = U + lam * step[:m], V + lam * step[m:]
            Rt, dt = residual(Ut, Vt)
            if np.linalg.norm(Rt) <= (1.0 - 1e-4 * lam) * l2:
                break
            lam *= 0.5
            if lam < 1e-12:
                raise NewtonStall(f"Armijo backtracking failed at residual {norm:.3g}")
        U, V, R, derivs = Ut, Vt, Rt, dt
        norm = float(np.max(np.abs(R)))
    u = np.concatenate([[0.0], U, [0.0]])
    v = np.concatenate([[0.0], V, [0.0]])
    meta = SolveMeta("FDNewton", norm, it, spec.epsilon, eff_tol,
                     slopes=(boundary_slope(u, x), boundary_slope(v, x)),
                     end_slopes=(boundary_slope(u, x, "right"), boundary_slope(v, x, "right")),
                     extras={"requested_tol": tol, "n": n})
    return SolutionPair(x, u, v, meta)


# ---------------------------------------------------------------------------
# continuation

def continue_in_epsilon(spec: ProblemSpec, schedule: Sequence[float], method: str = "shooting",
                        n: int = 2048, init_slopes=None) -> list:
    """Solve along a decreasing schedule of ``eps``, warm-starting each step."""
    from .analysis import boundary_rate

    sched = [float(e) for e in schedule]
    if not sched or any(e <= 0 for e in sched):
        raise DomainError("schedule entries must be positive")
    if any(b >= a for a, b in zip(sched, sched[1:])):
        raise DomainError("schedule must be strictly decreasing")
    out = []
    prev = None
    for eps in sched:
        sp = spec.with_epsilon(eps)
        try:
            if method == "shooting":
                start = prev.meta.slopes if prev is not None else init_slopes
                sol = solve_shooting(sp, start, n=n)
            elif method == "fd":
                sol = solve_fd_newton(sp, n=n, init=prev)
            else:
                raise DomainError(f"unknown method {method!r}")
        except NoConvergence as exc:
            raise NoConvergence(f"continuation failed at eps={eps:g}: {exc}",
                                exc.best_residual, exc.last, exc.iterations) from exc
        except NewtonStall as exc:
            raise NewtonStall(f"continuation failed at eps={eps:g}: {exc}") from exc
        su, sv = sol.sup_norms()
        sol.meta.extras.update({"sup_u": su, "sup_v": sv})
        for name, vals in (("u", sol.u), ("v", sol.v)):
            rate = boundary_rate(vals, sol.grid)
            sol.meta.extras[f"rate_{name}"] = (rate.c1, rate.c2)
        out.append(sol)
        prev = sol
    return out

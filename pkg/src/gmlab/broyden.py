"""Broyden's ("good") quasi-Newton method in a dogleg trust region."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import BlowUp, NoConvergence


@dataclass
class BroydenResult:
    x: np.ndarray
    fx: np.ndarray
    iterations: int
    nfev: int
    residual: float


def fd_jacobian(fun, x, fx, step=1e-7):
    """Forward-difference Jacobian; backs off the step on BlowUp."""
    n = len(x)
    J = np.empty((len(fx), n))
    nfev = 0
    for j in range(n):
        h = step * max(1.0, abs(x[j]))
        for _ in range(8):
            xp = x.copy()
            xp[j] += h
            try:
                fp = fun(xp)
                nfev += 1
                break
            except BlowUp:
                nfev += 1
                h = -h if h > 0 else 0.5 * -h
        else:
            raise BlowUp("finite-difference probe blew up in every direction")
        J[:, j] = (fp - fx) / h
    return J, nfev


def _dogleg(J, fx, radius):
    """Powell dogleg step for the model ``|fx + J dx|^2`` inside ``radius``."""
    try:
        newton = np.linalg.solve(J, -fx)
    except np.linalg.LinAlgError:
        newton = np.linalg.lstsq(J, -fx, rcond=None)[0]
    if np.linalg.norm(newton) <= radius:
        return newton
    grad = J.T @ fx
    jg = J @ grad
    gg = float(grad @ grad)
    if gg == 0.0:
        return newton * (radius / np.linalg.norm(newton))
    cauchy = -(gg / float(jg @ jg)) * grad
    cn = np.linalg.norm(cauchy)
    if cn >= radius:
        return cauchy * (radius / cn)
    # walk from the Cauchy point towards the Newton point until the boundary
    d = newton - cauchy
    a = float(d @ d)
    b = 2.0 * float(cauchy @ d)
    c = float(cauchy @ cauchy) - radius ** 2
    tau = (-b + np.sqrt(b * b - 4 * a * c)) / (2 * a)
    return cauchy + tau * d


def broyden_solve(fun, x0, tol=1e-9, max_iter=200, fd_step=1e-7, max_blowups=20,
                  radius0=None) -> BroydenResult:
    """Find a root of ``fun`` (maps R^n to R^n).

    The initial Jacobian is a forward-difference estimate and is updated by
    the good Broyden rank-one formula after every trial step.  Steps are
    chosen by a dogleg inside a trust region on ``|f|_2``; ``fun`` may raise
    :class:`BlowUp`, which rejects the step and shrinks the region.  After
    several rejections in a row the Jacobian is rebuilt by finite
    differences.  Convergence is tested on the infinity norm.
    """
    x = np.array(x0, dtype=float)
    try:
        fx = np.asarray(fun(x), dtype=float)
    except BlowUp as exc:
        raise NoConvergence(f"initial point blows up: {exc}", best_residual=np.inf,
                            last=x, iterations=0) from exc
    nfev = 1
    J, n = fd_jacobian(fun, x, fx, fd_step)
    nfev += n
    radius = radius0 if radius0 is not None else max(1.0, float(np.linalg.norm(x)))
    blowups = 0
    rejects = 0
    for it in range(1, max_iter + 1):
        norm = float(np.max(np.abs(fx)))
        if norm <= tol:
            return BroydenResult(x, fx, it - 1, nfev, norm)
        dx = _dogleg(J, fx, radius)
        step = float(np.linalg.norm(dx))
        xn = x + dx
        try:
            fn = np.asarray(fun(xn), dtype=float)
            nfev += 1
        except BlowUp:
            nfev += 1
            blowups += 1
            if blowups > max_blowups:
                raise NoConvergence("repeated blow-up backoffs", best_residual=norm,
                                    last=x, iterations=it)
            radius = 0.25 * step
            continue
        if not np.all(np.isfinite(fn)):
            radius = 0.25 * step
            continue
        f2 = float(fx @ fx)
        pred = f2 - float(np.sum((fx + J @ dx) ** 2))
        ared = f2 - float(fn @ fn)
        # the secant information is valid whether or not the step is taken
        J = J + np.outer(fn - fx - J @ dx, dx) / float(dx @ dx)
        ratio = ared / pred if pred > 0 else -1.0
        if ratio < 0.25:
            radius = 0.5 * step
        elif ratio > 0.75:
            radius = max(radius, 2.0 * step)
        if ared > 0:
            x, fx = xn, fn
            rejects = 0
        else:
            rejects += 1
            if rejects >= 3:
                J, n = fd_jacobian(fun, x, fx, fd_step)
                nfev += n
                rejects = 0
        if radius < 1e-15 * max(1.0, float(np.linalg.norm(x))):
            break
    norm = float(np.max(np.abs(fx)))
    if norm <= tol:
        return BroydenResult(x, fx, max_iter, nfev, norm)
    raise NoConvergence(f"no convergence after {max_iter} iterations", best_residual=norm,
                        last=x, iterations=max_iter)

"""Existence hypotheses, the nonexistence integral test and exponent regions.

Nothing here proves anything: hypotheses are checked on finite probe grids
and every report carries the worst witness so failures can be reproduced.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy import integrate

from .errors import DomainError, EvaluationError, ProfileMismatch
from .nonlinearity import NonlinearityQuad, PowerExponents
from .psi_profile import PsiProfile, psi_asymptotic

A1_SLACK = 1e-12
RATIO_CAP = 1e3
FIT_TOL = 0.05

EXISTS = "Exists"
NONEXISTENT = "NonexistenceProven"
UNKNOWN = "Unknown"

CASE_I = "case (i): s>1 and 2q>=(s+1)(p+2)"
CASE_II = "case (ii): s=1 and q>p+2"
CASE_III = "case (iii): 0<s<1 and q>=p+2"
INTEGRAL_TEST = "integral test"


@dataclass(frozen=True)
class Verdict:
    kind: str
    condition: str
    witnesses: dict = field(default_factory=dict)


@dataclass(frozen=True)
class A1Report:
    passed: bool
    worst_pair: tuple
    worst_value: float


@dataclass(frozen=True)
class A2Report:
    passed: bool
    ratio_trace: dict


def default_a1_grid(n: int = 60) -> np.ndarray:
    return np.geomspace(1e-6, 1e3, n)


def check_a1(quad: NonlinearityQuad, grid=None, slack: float = A1_SLACK) -> A1Report:
    """Evaluate ``A(t1, t2) = f(t1)/h(t1) - g(t2)/k(t2)`` on all pairs ``t1 >= t2``.

    A pair passes when ``A <= slack * max(1, |f/h|, |g/k|)``: the two ratios are
    rounded independently, so an absolute slack alone would reject exact ties
    such as ``t**-sigma - t**-sigma`` once the ratios are large.
    """
    t = default_a1_grid() if grid is None else np.asarray(grid, dtype=float)
    with np.errstate(over="ignore", divide="ignore", invalid="ignore"):
        fv = np.array([float(quad.f(x)) for x in t])
        hv = np.array([float(quad.h(x)) for x in t])
        gv = np.array([float(quad.g(x)) for x in t])
        kv = np.array([float(quad.k(x)) for x in t])
        for name, num, den in (("f/h", fv, hv), ("g/k", gv, kv)):
            bad = (den == 0) & (num != 0)
            if np.any(bad):
                raise EvaluationError(f"{name} undefined at t={t[np.argmax(bad)]}")
        ratio_fh = np.where(hv == 0, 0.0, fv / np.where(hv == 0, 1.0, hv))
        ratio_gk = np.where(kv == 0, 0.0, gv / np.where(kv == 0, 1.0, kv))
    # rows index t1, columns t2; only t1 >= t2 is constrained
        A = ratio_fh[:, None] - ratio_gk[None, :]
        scale = np.maximum(1.0, np.maximum(np.abs(ratio_fh)[:, None], np.abs(ratio_gk)[None, :]))
        excess = A - slack * scale
    mask = t[:, None] >= t[None, :]
    excess = np.where(mask, excess, -np.inf)
    excess = np.where(np.isnan(excess), np.inf, excess)
    i, j = np.unravel_index(int(np.argmax(excess)), excess.shape)
    worst = float(A[i, j])
    return A1Report(bool(excess[i, j] <= 0), (float(t[i]), float(t[j])), worst)


def check_a2(quad: NonlinearityQuad, c_probes=(0.5, 1.0, 10.0), t_probes=None,
             ratio_cap: float = RATIO_CAP, tail: int = 5) -> A2Report:
    """Probe ``K(t)/h(t+c) -> inf`` along a geometric sequence of ``t``."""
    for t in (0.5, 1.0, 2.0):
        ref, _ = integrate.quad(lambda x: float(quad.k(x)), 0.0, t, epsabs=1e-14, epsrel=1e-13)
        if abs(float(quad.K(t)) - ref) > 1e-8 * max(1.0, abs(ref)):
            raise DomainError(f"K is not an antiderivative of k at t={t}")
    ts = np.geomspace(1.0, 1e8, 33) if t_probes is None else np.asarray(t_probes, dtype=float)
    trace = {}
    passed = True
    with np.errstate(over="ignore", divide="ignore", invalid="ignore"):
        for c in c_probes:
            ratios = np.array([float(quad.K(t)) / float(quad.h(t + c)) for t in ts])
            trace[float(c)] = ratios
            last = ratios[-tail:]
            increasing = bool(np.all(np.diff(last) > 0))
            if not (increasing and last[-1] > ratio_cap):
                passed = False
    return A2Report(passed, trace)


def _ge(a, b, tol=1e-12):
    return a >= b - tol


def classify_exponents(e: PowerExponents) -> Verdict:
    """Place a pure-power tuple in the existence, nonexistence or unknown region."""
    if not isinstance(e, PowerExponents):
        e = PowerExponents(*e)
    p, q, r, s = e.as_tuple()
    if s > 1 and _ge(2 * q, (s + 1) * (p + 2)):
        return Verdict(NONEXISTENT, CASE_I, {"2q": 2 * q, "(s+1)(p+2)": (s + 1) * (p + 2)})
    if s == 1 and q > p + 2:
        return Verdict(NONEXISTENT, CASE_II, {"q": q, "p+2": p + 2})
    if s < 1 and _ge(q, p + 2):
        return Verdict(NONEXISTENT, CASE_III, {"q": q, "p+2": p + 2})
    sigma = e.detected_sigma()
    if sigma is not None and sigma >= -1e-12 and p - q < 1:
        return Verdict(EXISTS, f"sigma={max(sigma, 0.0):.12g}>=0 and p-q={p - q:.12g}<1",
                       {"sigma": max(sigma, 0.0), "p-q": p - q})
    return Verdict(UNKNOWN, "no existence or nonexistence condition applies",
                   {"sigma": sigma, "p-q": p - q})


def assess_quad(quad: NonlinearityQuad, a1_grid=None) -> Verdict:
    """Verdict for a general quadruple from numeric (A1)/(A2) checks.

    Pure powers are delegated to :func:`classify_exponents`; otherwise a
    passing pair of checks is labelled ``A1A2-pass (numeric)`` but stays
    ``Unknown`` because probes are not proofs.
    """
    if quad.power_meta is not None:
        return classify_exponents(quad.power_meta)
    r1 = check_a1(quad, a1_grid)
    r2 = check_a2(quad)
    if r1.passed and r2.passed:
        return Verdict(UNKNOWN, "A1A2-pass (numeric)", {"a1_worst": r1.worst_value})
    return Verdict(UNKNOWN, "A1/A2 not verified",
                   {"a1_pass": r1.passed, "a2_pass": r2.passed, "a1_worst_pair": r1.worst_pair})


@dataclass(frozen=True)
class IntegralTestReport:
    divergent: bool
    fitted_exponent: float
    borderline: bool
    log_power: Optional[float] = None
    note: str = ""
    points: tuple = ()


def _log_integrand(quad, m, M, t, psi_val):
    if quad.power_meta is not None:
        p, q, _, _ = quad.power_meta.as_tuple()
        return math.log(t) + p * math.log(m * t) - q * math.log(M * psi_val)
    num = float(quad.f(m * t))
    den = float(quad.g(M * psi_val))
    if num <= 0 or den <= 0:
        raise EvaluationError(f"integrand undefined at t={t}")
    return math.log(t) + math.log(num) - math.log(den)


def nonexistence_integral_test(quad: NonlinearityQuad, m: float, M: float,
                               profile: PsiProfile, j_max: int = 64, n_fit: int = 6,
                               fit_tol: float = FIT_TOL) -> IntegralTestReport:
    """Decide divergence of ``int_0 t f(mt) / g(M Psi(t)) dt`` at the origin.

    The integrand is sampled at ``t = 2**-j`` for the last ``n_fit`` values of
    ``j <= j_max`` and its local power is fitted by log-log regression.  For
    ``k(t) = t`` with power data the answer is settled by the exact rule for
    ``t**a (-ln t)**b`` (divergent iff ``a < -1`` or ``a = -1, b >= -1``).
    """
    if not (0 < m < 1):
        raise DomainError(f"m must lie in (0, 1), got {m}")
    if not M > 1:
        raise DomainError(f"M must exceed 1, got {M}")
    if profile.source_k != quad.k:
        raise ProfileMismatch(f"profile built from {profile.source_k.label}, quad has {quad.k.label}")
    js = np.arange(j_max - n_fit + 1, j_max + 1)
    ts = 2.0 ** -js.astype(float)
    s = quad.k.power_exponent
    if s == 1.0 and quad.power_meta is not None:
        form = psi_asymptotic(1.0)
        slopes = []
        for c in (form.c_lo, form.c_hi):
            logs = [_log_integrand(quad, m, M, t, c * t * math.sqrt(-math.log(t))) for t in ts]
            slopes.append(np.polyfit(np.log(ts), logs, 1)[0])
        fitted = float(np.mean(slopes))
        p, q, _, _ = quad.power_meta.as_tuple()
        a_exp, b_exp = 1.0 + p - q, -q / 2.0
        divergent = a_exp < -1 - 1e-12 or (abs(a_exp + 1) <= 1e-12 and b_exp >= -1)
        return IntegralTestReport(divergent, fitted, abs(fitted + 1) <= fit_tol, b_exp,
                                  "log-corrected profile; exact t^a(-ln t)^b rule", tuple(map(float, ts)))
    logs = [_log_integrand(quad, m, M, t, profile.psi(t)) for t in ts]
    fitted = float(np.polyfit(np.log(ts), logs, 1)[0])
    divergent = fitted <= -1.0 + fit_tol
    borderline = abs(fitted + 1.0) <= fit_tol
    note = "Borderline" if borderline else ""
    return IntegralTestReport(divergent, fitted, borderline, None, note, tuple(map(float, ts)))


def power_quad_local_exponent(e: PowerExponents) -> float:
    """Exponent of the integrand near 0 predicted from the profile asymptotics."""
    p, q, _, s = e.as_tuple()
    if s > 1:
        return 1.0 + p - 2.0 * q / (s + 1.0)
    return 1.0 + p - q

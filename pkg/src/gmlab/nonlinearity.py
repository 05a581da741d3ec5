"""Nonlinearities of the activator-inhibitor system.

The system couples the activator ``u`` and inhibitor ``v`` through four
nonnegative nondecreasing maps ``f, g, h, k`` on ``[0, inf)`` with
``g(0) = k(0) = 0``.  Pure powers carry their exponents so that downstream
code can use exact asymptotics instead of numerics.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy import integrate

from .errors import DomainError, NonIntegrableInner

SIGMA_TOL = 1e-12


def quiet_quad(fun, lo, hi, **kwargs) -> float:
    """``scipy.integrate.quad`` without IntegrationWarning.

    Callers ask for tolerances near machine precision, where QUADPACK warns
    about roundoff although the value is accurate.
    """
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", integrate.IntegrationWarning)
        return integrate.quad(fun, lo, hi, **kwargs)[0]


@dataclass(frozen=True)
class Power:
    """Picklable callable ``t -> t**exponent``."""

    exponent: float

    def __call__(self, t):
        return np.power(t, self.exponent)


@dataclass(frozen=True)
class PowerAntiderivative:
    """Picklable callable ``t -> t**(s+1) / (s+1)``."""

    exponent: float

    def __call__(self, t):
        return np.power(t, self.exponent + 1.0) / (self.exponent + 1.0)


@dataclass(frozen=True)
class KFunction:
    """The inhibitor nonlinearity ``k`` with optional power metadata.

    ``evaluator`` must accept scalars; array support is used when present.
    When ``power_exponent`` is set, ``k(t) = t**power_exponent`` is assumed
    and the inner integral of ``1/k`` is taken in closed form.
    """

    evaluator: Callable
    power_exponent: Optional[float] = None
    label: str = "k"

    @classmethod
    def power(cls, s: float) -> "KFunction":
        if not s > 0:
            raise DomainError(f"power exponent must be positive, got {s}")
        return cls(Power(float(s)), float(s), f"t^{s:g}")

    def __call__(self, t):
        return self.evaluator(t)

    def inner(self, log_tau: float) -> float:
        """Return the integral of ``1/k`` over ``[tau, 1]`` given ``log(tau)``.

        Working with ``log(tau)`` keeps full precision both for tiny ``tau``
        and for ``tau`` next to 1.  Overflow yields ``inf``.
        """
        if log_tau > 0:
            raise DomainError(f"tau must lie in (0, 1], got exp({log_tau})")
        if log_tau == 0:
            return 0.0
        s = self.power_exponent
        if s is not None:
            if s == 1.0:
                return -log_tau
            expo = (1.0 - s) * log_tau
            if expo > 700.0:
                return math.inf
            val = math.expm1(expo) / (s - 1.0)
        else:
            def integrand(w):
                return math.exp(w) / float(self.evaluator(math.exp(w)))

            with np.errstate(over="ignore", divide="ignore"):
                val = quiet_quad(integrand, log_tau, 0.0, epsabs=0.0, epsrel=1e-13,
                                 limit=200)
        if math.isnan(val) or val < 0:
            raise NonIntegrableInner(
                f"inner integral of 1/{self.label} is not finite at tau=exp({log_tau})")
        return val

    def check(self, grid=None) -> None:
        """Raise DomainError when ``k(0) != 0`` or ``k`` decreases on ``grid``."""
        if grid is None:
            grid = np.concatenate([[0.0], np.geomspace(1e-8, 10.0, 200)])
        vals = np.array([float(self.evaluator(t)) for t in grid])
        if vals[0] != 0.0:
            raise DomainError(f"{self.label}(0) = {vals[0]} but must vanish")
        if np.any(np.diff(vals) < 0):
            raise DomainError(f"{self.label} is not nondecreasing on the probe grid")
        if np.any(vals[1:] <= 0):
            raise DomainError(f"{self.label} must be positive away from 0")


@dataclass(frozen=True)
class PowerExponents:
    """Exponents of the pure-power system ``u^p/v^q`` and ``u^r/v^s``."""

    p: float
    q: float
    r: float
    s: float
    sigma: Optional[float] = None

    def __post_init__(self):
        for name in ("p", "q", "r", "s"):
            val = getattr(self, name)
            if not (isinstance(val, (int, float)) and math.isfinite(val) and val > 0):
                raise DomainError(f"exponent {name} must be a positive real, got {val!r}")
        if self.sigma is not None:
            if self.sigma < 0:
                raise DomainError(f"sigma must be nonnegative, got {self.sigma}")
            if (abs(self.r - self.p - self.sigma) > SIGMA_TOL
                    or abs(self.s - self.q - self.sigma) > SIGMA_TOL):
                raise DomainError("sigma form requires r - p = s - q = sigma")

    @classmethod
    def from_sigma(cls, p: float, q: float, sigma: float) -> "PowerExponents":
        return cls(p, q, p + sigma, q + sigma, sigma)

    def detected_sigma(self) -> Optional[float]:
        """Return the common shift ``r - p = s - q`` when it exists."""
        if self.sigma is not None:
            return self.sigma
        d1, d2 = self.r - self.p, self.s - self.q
        if abs(d1 - d2) <= SIGMA_TOL:
            return 0.5 * (d1 + d2)
        return None

    def as_tuple(self):
        return (self.p, self.q, self.r, self.s)


@dataclass(frozen=True)
class NonlinearityQuad:
    """The quadruple ``(f, g, h, k)`` plus the antiderivative ``K`` of ``k``."""

    f: Callable
    g: Callable
    h: Callable
    k: KFunction
    K: Callable
    power_meta: Optional[PowerExponents] = None
    label: str = field(default="quad")

    @classmethod
    def powers(cls, p, q, r, s) -> "NonlinearityQuad":
        meta = PowerExponents(p, q, r, s)
        return cls(Power(float(p)), Power(float(q)), Power(float(r)),
                   KFunction.power(s), PowerAntiderivative(float(s)), meta,
                   label=f"powers({p:g},{q:g},{r:g},{s:g})")

    def check(self, grid=None) -> None:
        """Validate the structural assumptions on a probe grid."""
        if grid is None:
            grid = np.concatenate([[0.0], np.geomspace(1e-6, 1e3, 120)])
        grid = np.asarray(grid, dtype=float)
        with np.errstate(over="ignore"):
            for name in ("f", "g", "h"):
                vals = np.array([float(getattr(self, name)(t)) for t in grid])
                if np.any(vals < 0) or np.any(np.diff(vals) < 0):
                    raise DomainError(f"{name} must be nonnegative and nondecreasing")
            if float(self.g(0.0)) != 0.0:
                raise DomainError("g(0) must vanish")
        self.k.check(grid)
        if self.power_meta is not None:
            probes = grid[grid > 0]
            for name, e in zip("fghk", self.power_meta.as_tuple()):
                fn = self.k if name == "k" else getattr(self, name)
                vals = np.array([float(fn(t)) for t in probes])
                ref = probes ** e
                if np.any(np.abs(vals - ref) > 1e-12 * np.abs(ref)):
                    raise DomainError(f"{name} does not match t^{e:g}")

"""The boundary profile of the inhibitor.

For a nondecreasing ``k`` with ``k(0) = 0`` define

    Phi(t) = int_0^t (2 int_tau^1 dtheta / k(theta))^(-1/2) dtau,   0 <= t < 1,

its endpoint ``a = Phi(1-)`` and the inverse ``Psi: [0, a) -> [0, 1)``.
``Psi`` solves ``-Psi'' = 1/k(Psi)`` with ``Psi(0) = 0`` and controls how
fast the inhibitor may vanish at the boundary.

Quadrature runs in two substitutions.  Below ``SPLIT`` the outer integral
is taken in ``log(tau)``, which resolves the algebraic behaviour at the
origin; above it ``tau = 1 - sigma**2`` removes the inverse square-root
singularity at ``tau = 1``.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .errors import DomainError, GridTooCoarse, NonIntegrableInner
from .io import write_csv
from .nonlinearity import KFunction, quiet_quad

SPLIT = 0.5
LOG_TAIL = 45.0          # e**-45 ~ 3e-20 relative tail of the log integral
QUAD_RTOL = 1e-13
INV_TOL = 1e-10
DIVERGENCE_CAP = 1e6


def _phi_prime(k: KFunction, log_tau: float) -> float:
    inner = k.inner(log_tau)
    if inner == 0.0:
        return math.inf
    return 1.0 / math.sqrt(2.0 * inner)


def _log_segment(k: KFunction, lo: float, hi: float) -> float:
    """Integral of Phi' over ``tau`` in ``[exp(lo), exp(hi)]``."""
    if hi <= lo:
        return 0.0

    def integrand(w):
        return math.exp(w) * _phi_prime(k, w)

    val = quiet_quad(integrand, lo, hi, epsabs=0.0, epsrel=QUAD_RTOL, limit=200)
    return val


def _sigma_segment(k: KFunction, lo: float, hi: float) -> float:
    """Integral of Phi' over ``tau = 1 - sigma**2`` with ``sigma`` in ``[lo, hi]``."""
    if hi <= lo:
        return 0.0
    k1 = float(k(1.0))

    def integrand(sig):
        if sig == 0.0:
            return math.sqrt(2.0 * k1)
        return 2.0 * sig * _phi_prime(k, math.log1p(-sig * sig))

    val = quiet_quad(integrand, lo, hi, epsabs=0.0, epsrel=QUAD_RTOL, limit=200)
    return val


def _phi_from_zero(k: KFunction, t: float) -> float:
    lt = math.log(t)
    return _log_segment(k, lt - LOG_TAIL, lt)


@functools.lru_cache(maxsize=256)
def _phi_split(k: KFunction) -> float:
    return _phi_from_zero(k, SPLIT)


def phi_of(t: float, k: KFunction) -> float:
    """Evaluate ``Phi(t)`` by adaptive Gauss-Kronrod quadrature."""
    if not (0.0 <= t < 1.0):
        raise DomainError(f"Phi is defined on [0, 1), got t={t}")
    if t == 0.0:
        return 0.0
    if not math.isfinite(k.inner(math.log(t))):
        raise NonIntegrableInner(f"inner integral diverges at tau={t}")
    if t <= SPLIT:
        return _phi_from_zero(k, t)
    return _phi_split(k) + _sigma_segment(k, math.sqrt(1.0 - t), math.sqrt(1.0 - SPLIT))


def endpoint_a(k: KFunction, levels: int = 12, cap: float = DIVERGENCE_CAP) -> float:
    """Return ``a = lim Phi(t)`` as ``t -> 1``, or ``inf`` when it diverges.

    Partial values ``Phi(1 - 4**-j)`` are extrapolated twice by Richardson
    (the remainder expands in half-integer powers of ``1 - t``).  Divergence
    is declared once a partial value exceeds ``cap`` or the increments stop
    shrinking.
    """
    base = _phi_split(k)
    partial = []
    for j in range(1, levels + 1):
        sig = 2.0 ** -j
        val = base + _sigma_segment(k, sig, math.sqrt(1.0 - SPLIT))
        if not math.isfinite(val) or val > cap:
            return math.inf
        partial.append(val)
    inc = np.diff(partial)
    if np.any(inc[-3:] <= 0) or np.any(inc[-3:] / inc[-4:-1] > 0.9):
        return math.inf
    r1 = [2.0 * partial[j + 1] - partial[j] for j in range(len(partial) - 1)]
    r2 = [(8.0 * r1[j + 1] - r1[j]) / 7.0 for j in range(len(r1) - 1)]
    return r2[-1]


def _table_nodes(n_small: int, n_large: int) -> np.ndarray:
    small = np.geomspace(1e-12, SPLIT, n_small)
    sig = np.geomspace(math.sqrt(1.0 - SPLIT), 1e-7, n_large)[1:]
    return np.concatenate([[0.0], small, 1.0 - sig * sig])


class PsiProfile:
    """Tabulated ``Phi`` with its endpoint ``a`` and the inverse ``Psi``.

    Instances are immutable after construction.  ``Phi`` between table nodes
    is evaluated by quadrature from the nearest node below, so the table only
    serves as a bracket and an accumulation base, never as an interpolant.
    """

    def __init__(self, k: KFunction, n_small: int = 40, n_large: int = 30):
        self._k = k
        t = _table_nodes(n_small, n_large)
        phi = np.zeros_like(t)
        phi[1] = _phi_from_zero(k, t[1])
        for i in range(2, len(t)):
            lo, hi = t[i - 1], t[i]
            if hi <= SPLIT:
                seg = _log_segment(k, math.log(lo), math.log(hi))
            else:
                seg = _sigma_segment(k, math.sqrt(1.0 - hi), math.sqrt(1.0 - lo))
            phi[i] = phi[i - 1] + seg
        if np.any(np.diff(phi) <= 0):
            raise NonIntegrableInner("Phi is not strictly increasing on the table")
        t.setflags(write=False)
        phi.setflags(write=False)
        self._t = t
        self._phi = phi
        self._a = endpoint_a(k)

    @property
    def source_k(self) -> KFunction:
        return self._k

    @property
    def a(self) -> float:
        return self._a

    @property
    def divergent(self) -> bool:
        return math.isinf(self._a)

    @property
    def phi_table(self):
        return self._t, self._phi

    def phi(self, t: float) -> float:
        """``Phi(t)`` accumulated from the closest table node below ``t``."""
        if not (0.0 <= t < 1.0):
            raise DomainError(f"Phi is defined on [0, 1), got t={t}")
        if t == 0.0:
            return 0.0
        j = int(np.searchsorted(self._t, t, side="right")) - 1
        if j == 0:
            return _phi_from_zero(self._k, t)
        t0 = self._t[j]
        if t <= SPLIT:
            return self._phi[j] + _log_segment(self._k, math.log(t0), math.log(t))
        return self._phi[j] + _sigma_segment(self._k, math.sqrt(1.0 - t), math.sqrt(1.0 - t0))

    def phi_prime(self, t: float) -> float:
        return _phi_prime(self._k, math.log(t))

    def psi(self, y: float) -> float:
        """Invert ``Phi`` by safeguarded Newton iteration inside a bracket."""
        if y < 0 or not y < self._a:
            raise DomainError(f"Psi is defined on [0, {self._a}), got y={y}")
        if y == 0.0:
            return 0.0
        t_tab, phi_tab = self._t, self._phi
        j = int(np.searchsorted(phi_tab, y, side="right")) - 1
        if j >= len(t_tab) - 1:
            # beyond the last node: bracket towards 1 in sigma
            lo_sig, hi_sig = 0.0, math.sqrt(1.0 - t_tab[-1])
            return self._invert_sigma(y, lo_sig, hi_sig)
        if j == 0:
            hi = t_tab[1]
            lo = hi
            while self.phi(lo) > y:
                lo *= 1e-3
                if lo < 1e-300:
                    raise DomainError(f"cannot bracket Psi({y})")
            return self._invert_log(y, math.log(lo), math.log(hi))
        lo, hi = t_tab[j], t_tab[j + 1]
        if hi <= SPLIT:
            return self._invert_log(y, math.log(lo), math.log(hi))
        return self._invert_sigma(y, math.sqrt(1.0 - hi), math.sqrt(1.0 - lo))

    def _invert_log(self, y, zlo, zhi):
        def fun(z):
            t = math.exp(z)
            return self.phi(t) - y, t * self.phi_prime(t)

        z = _rtsafe(fun, zlo, zhi)
        return math.exp(z)

    def _invert_sigma(self, y, slo, shi):
        def fun(sig):
            t = 1.0 - sig * sig
            if sig == 0.0:
                return self._a - y, -math.sqrt(2.0 * float(self._k(1.0)))
            return self.phi(t) - y, -2.0 * sig * self.phi_prime(t)

        sig = _rtsafe(fun, slo, shi)
        return 1.0 - sig * sig

    def __call__(self, y):
        if np.ndim(y) == 0:
            return self.psi(float(y))
        return np.array([self.psi(float(v)) for v in np.ravel(y)]).reshape(np.shape(y))


def _rtsafe(fun, lo, hi, max_iter=100):
    """Newton iteration kept inside a shrinking bisection bracket."""
    flo, _ = fun(lo)
    fhi, _ = fun(hi)
    if flo == 0.0:
        return lo
    if fhi == 0.0:
        return hi
    if flo * fhi > 0:
        raise DomainError("root is not bracketed")
    if flo > 0:
        lo, hi = hi, lo
    x = 0.5 * (lo + hi)
    dx_old = abs(hi - lo)
    dx = dx_old
    fx, dfx = fun(x)
    for _ in range(max_iter):
        newton_out = ((x - hi) * dfx - fx) * ((x - lo) * dfx - fx) > 0
        if newton_out or not math.isfinite(dfx) or abs(2.0 * fx) > abs(dx_old * dfx):
            dx_old = dx
            dx = 0.5 * (hi - lo)
            x = lo + dx
        else:
            dx_old = dx
            dx = fx / dfx
            x = x - dx
        if abs(dx) <= 4e-16 * max(1.0, abs(x)):
            return x
        fx, dfx = fun(x)
        if fx == 0.0:
            return x
        if fx < 0:
            lo = x
        else:
            hi = x
    return x


def build_profile(k: KFunction, **kwargs) -> PsiProfile:
    return PsiProfile(k, **kwargs)


def psi_of(y: float, profile: PsiProfile) -> float:
    return profile.psi(y)


# ---------------------------------------------------------------------------
# asymptotics near the origin

@dataclass(frozen=True)
class AsymptoticForm:
    """Behaviour of ``Psi(t)`` as ``t -> 0`` for ``k(t) = t**s``.

    kind is ``"PowerLaw"`` (``C t**exponent``), ``"LogCorrected"``
    (``c t sqrt(-ln t)`` with ``c`` bracketed by ``c_lo <= c <= c_hi``) or
    ``"Linear"`` (``slope * t``).
    """

    kind: str
    C: Optional[float] = None
    exponent: Optional[float] = None
    c_lo: Optional[float] = None
    c_hi: Optional[float] = None
    slope: Optional[float] = None
    valid_near: float = 0.0

    def __post_init__(self):
        if self.kind == "PowerLaw":
            ok = self.C > 0 and 0 < self.exponent < 1
        elif self.kind == "LogCorrected":
            ok = 0 < self.c_lo <= self.c_hi
        elif self.kind == "Linear":
            ok = self.slope > 0
        else:
            ok = False
        if not ok:
            raise DomainError(f"inconsistent asymptotic form {self}")

    def bracket(self, t):
        """Lower and upper model values at ``t`` (equal except LogCorrected)."""
        t = np.asarray(t, dtype=float)
        if self.kind == "PowerLaw":
            v = self.C * t ** self.exponent
            return v, v
        if self.kind == "Linear":
            v = self.slope * t
            return v, v
        shape = t * np.sqrt(-np.log(t))
        return self.c_lo * shape, self.c_hi * shape


@functools.lru_cache(maxsize=1)
def _log_corrected_bracket():
    prof = PsiProfile(KFunction.power(1.0))
    ys = np.geomspace(1e-6, 1e-3, 13)
    ratio = np.array([prof.psi(y) / (y * math.sqrt(-math.log(y))) for y in ys])
    return float(ratio.min()), float(ratio.max())


def psi_asymptotic(s: float) -> AsymptoticForm:
    """Small-``t`` form of ``Psi`` for ``k(t) = t**s``.

    For ``s > 1`` the constant is the one for which ``C t**(2/(s+1))`` solves
    ``-Psi'' = Psi**-s`` exactly: ``C = ((1+s)**2 / (2(s-1)))**(1/(1+s))``.
    """
    if not s > 0:
        raise DomainError(f"s must be positive, got {s}")
    if s > 1:
        C = ((1.0 + s) ** 2 / (2.0 * (s - 1.0))) ** (1.0 / (1.0 + s))
        return AsymptoticForm("PowerLaw", C=C, exponent=2.0 / (s + 1.0))
    if s == 1:
        lo, hi = _log_corrected_bracket()
        return AsymptoticForm("LogCorrected", c_lo=lo, c_hi=hi)
    return AsymptoticForm("Linear", slope=math.sqrt(2.0 / (1.0 - s)))


# ---------------------------------------------------------------------------
# ODE check

@dataclass(frozen=True)
class OdeReport:
    max_defect: float
    noise: float
    pass_: bool
    worst_y: float


def _second_difference(psi, y, h):
    return (psi(y + h) - 2.0 * psi(y) + psi(y - h)) / (h * h)


def verify_psi_ode(profile, grid=None, tol: float = 1e-5, *, k: Optional[KFunction] = None,
                   a: Optional[float] = None, n: int = 64) -> OdeReport:
    """Check ``-Psi''(y) k(Psi(y)) = 1`` on interior grid points.

    ``profile`` is a :class:`PsiProfile` or any callable ``Psi`` (then ``k``
    and ``a`` are required).  ``Psi''`` is a Richardson-extrapolated central
    difference whose step shrinks with the distance to ``0`` and ``a``; the
    spread between two extrapolations is the noise estimate.
    """
    if isinstance(profile, PsiProfile):
        k = k or profile.source_k
        a = profile.a if a is None else a
        psi: Callable = profile.psi
    else:
        if k is None:
            raise DomainError("k is required when Psi is a plain callable")
        psi = profile
    if grid is None:
        if a is None or not math.isfinite(a):
            raise DomainError("a finite endpoint or an explicit grid is required")
        grid = a * np.arange(1, n + 1) / (n + 1)
    grid = np.asarray(grid, dtype=float)
    if len(grid) < 3:
        raise GridTooCoarse("need at least three grid points")
    spacing = float(np.min(np.diff(grid))) if len(grid) > 1 else grid[0]
    upper = a if a is not None and math.isfinite(a) else float(grid[-1] + spacing)
    defects, noises = [], []
    for y in grid:
        if not (0 < y < upper):
            raise DomainError(f"grid point {y} is not interior to (0, a)")
        h = min(spacing, y, upper - y) / 16.0
        d1 = _second_difference(psi, y, h)
        d2 = _second_difference(psi, y, h / 2)
        d3 = _second_difference(psi, y, h / 4)
        r1 = (4.0 * d2 - d1) / 3.0
        r2 = (4.0 * d3 - d2) / 3.0
        kv = float(k(psi(y)))
        defects.append(abs(-r2 * kv - 1.0))
        noises.append(abs(r2 - r1) * kv)
    defects = np.array(defects)
    noise = float(np.max(noises))
    if noise > tol / 2:
        raise GridTooCoarse(f"finite-difference noise {noise:.3g} exceeds tol/2 = {tol / 2:.3g}")
    worst = int(np.argmax(defects))
    return OdeReport(float(defects[worst]), noise, bool(defects[worst] <= tol), float(grid[worst]))


def export_csv(profile: PsiProfile, path, n: Optional[int] = None):
    """Write columns ``t, phi, y, psi``; ``y`` is uniform on ``[0, 0.99 a]``."""
    t, phi = profile.phi_table
    n = len(t) if n is None else n
    idx = np.linspace(0, len(t) - 1, n).round().astype(int)
    top = 0.99 * profile.a if not profile.divergent else float(phi[-1])
    ys = np.linspace(0.0, top, n)
    rows = [(float(t[i]), float(phi[i]), float(y), profile.psi(float(y))) for i, y in zip(idx, ys)]
    return write_csv(path, ["t", "phi", "y", "psi"], rows)

"""Dormand-Prince 5(4) integrator for second-order systems.

The state is ``(u, u', v, v')``.  Because the right-hand side returns the
second derivatives, every accepted step carries value, slope and curvature
of ``u`` and ``v`` at both ends, which gives a quintic Hermite dense output
without extra evaluations.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import BlowUp

# Butcher tableau
C2, C3, C4, C5 = 1 / 5, 3 / 10, 4 / 5, 8 / 9
A21 = 1 / 5
A31, A32 = 3 / 40, 9 / 40
A41, A42, A43 = 44 / 45, -56 / 15, 32 / 9
A51, A52, A53, A54 = 19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729
A61, A62, A63, A64, A65 = 9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656
B1, B3, B4, B5, B6 = 35 / 384, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84
# fifth minus fourth order weights
E1, E3, E4, E5, E6, E7 = (71 / 57600, -71 / 16695, 71 / 1920,
                          -17253 / 339200, 22 / 525, -1 / 40)

SAFETY = 0.9
MIN_FACTOR = 0.2
MAX_FACTOR = 5.0


@dataclass
class Trajectory:
    """Accepted step points of one integration."""

    x: np.ndarray        # (m,)
    y: np.ndarray        # (m, 4) states
    dy: np.ndarray       # (m, 4) derivatives
    n_steps: int
    n_rejected: int

    @property
    def final(self):
        return self.y[-1]

    def sample(self, xs):
        """Quintic Hermite values of ``u`` and ``v`` at ``xs``."""
        xs = np.asarray(xs, dtype=float)
        idx = np.clip(np.searchsorted(self.x, xs, side="right") - 1, 0, len(self.x) - 2)
        x0, x1 = self.x[idx], self.x[idx + 1]
        h = x1 - x0
        s = (xs - x0) / h
        out = []
        for c in (0, 2):
            f0, f1 = self.y[idx, c], self.y[idx + 1, c]
            d0, d1 = self.y[idx, c + 1] * h, self.y[idx + 1, c + 1] * h
            c0, c1 = self.dy[idx, c + 1] * h * h, self.dy[idx + 1, c + 1] * h * h
            out.append(_quintic(s, f0, f1, d0, d1, c0, c1))
        return out[0], out[1]


def _quintic(s, f0, f1, d0, d1, c0, c1):
    s2 = s * s
    s3 = s2 * s
    s4 = s3 * s
    s5 = s4 * s
    h00 = 1 - 10 * s3 + 15 * s4 - 6 * s5
    h01 = 10 * s3 - 15 * s4 + 6 * s5
    h10 = s - 6 * s3 + 8 * s4 - 3 * s5
    h11 = -4 * s3 + 7 * s4 - 3 * s5
    h20 = 0.5 * (s2 - 3 * s3 + 3 * s4 - s5)
    h21 = 0.5 * (s3 - 2 * s4 + s5)
    return h00 * f0 + h01 * f1 + h10 * d0 + h11 * d1 + h20 * c0 + h21 * c1


def integrate(rhs, x0: float, y0, x1: float, rtol: float = 1e-10, atol: float = 1e-12,
              state_cap: float = 1e8, h0=None, max_steps: int = 200000) -> Trajectory:
    """Integrate ``y' = rhs(x, y)`` from ``x0`` to ``x1`` with error control.

    ``rhs`` works on 4-tuples of floats and returns a 4-tuple.  Raises
    :class:`BlowUp` when ``|u| + |v|`` exceeds ``state_cap`` or the state
    stops being finite.
    """
    x = float(x0)
    y = tuple(float(v) for v in y0)
    k1 = rhs(x, y)
    span = x1 - x0
    h = h0 if h0 is not None else min(1e-3, span)
    xs, ys, dys = [x], [y], [k1]
    n_rej = 0
    for _ in range(max_steps):
        if x >= x1:
            break
        if x + h > x1:
            h = x1 - x
        y2 = tuple(y[i] + h * A21 * k1[i] for i in range(4))
        k2 = rhs(x + C2 * h, y2)
        y3 = tuple(y[i] + h * (A31 * k1[i] + A32 * k2[i]) for i in range(4))
        k3 = rhs(x + C3 * h, y3)
        y4 = tuple(y[i] + h * (A41 * k1[i] + A42 * k2[i] + A43 * k3[i]) for i in range(4))
        k4 = rhs(x + C4 * h, y4)
        y5 = tuple(y[i] + h * (A51 * k1[i] + A52 * k2[i] + A53 * k3[i] + A54 * k4[i])
                   for i in range(4))
        k5 = rhs(x + C5 * h, y5)
        y6 = tuple(y[i] + h * (A61 * k1[i] + A62 * k2[i] + A63 * k3[i] + A64 * k4[i]
                               + A65 * k5[i]) for i in range(4))
        k6 = rhs(x + h, y6)
        yn = tuple(y[i] + h * (B1 * k1[i] + B3 * k3[i] + B4 * k4[i] + B5 * k5[i] + B6 * k6[i])
                   for i in range(4))
        k7 = rhs(x + h, yn)
        err = 0.0
        for i in range(4):
            e = h * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i]
                     + E7 * k7[i])
            sc = atol + rtol * max(abs(y[i]), abs(yn[i]))
            err += (e / sc) ** 2
        err = math.sqrt(err / 4.0)
        if not math.isfinite(err):
            err = math.inf
        if err <= 1.0:
            x = x + h if x + h < x1 else x1
            y = yn
            k1 = k7
            if not (math.isfinite(y[0]) and math.isfinite(y[2])) or abs(y[0]) + abs(y[2]) > state_cap:
                raise BlowUp(f"state exceeded {state_cap:g} at x={x:.6g}", x)
            xs.append(x)
            ys.append(y)
            dys.append(k1)
            fac = MAX_FACTOR if err == 0 else min(MAX_FACTOR, SAFETY * err ** -0.2)
            h *= fac
        else:
            n_rej += 1
            fac = MIN_FACTOR if not math.isfinite(err) else max(MIN_FACTOR, SAFETY * err ** -0.2)
            h *= fac
            if h < 1e-14 * max(1.0, abs(x)):
                raise BlowUp(f"step size underflow at x={x:.6g}", x)
    else:
        raise BlowUp("step budget exhausted", x)
    return Trajectory(np.array(xs), np.array(ys), np.array(dys), len(xs) - 1, n_rej)

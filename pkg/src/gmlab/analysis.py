"""Checks on computed steady states.

Order bounds against the sub-solutions, linear boundary rates, a multi-start
uniqueness probe and the discrete residual of an arbitrary nodal pair.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .bvp_solver import (AuxProfiles, ProblemSpec, SolutionPair, fd_residual, solve_shooting)
from .errors import DegenerateProfile, GridMismatch

BOUND_SLACK = 1e-8
CLUSTER_TOL = 1e-6


@dataclass(frozen=True)
class BoundCheck:
    name: str
    worst_node: float
    worst_slack: float
    passed: bool


@dataclass(frozen=True)
class BoundsReport:
    checks: tuple

    @property
    def overall(self) -> bool:
        return all(c.passed for c in self.checks)

    def failed(self):
        return [c.name for c in self.checks if not c.passed]


def verify_bounds(sol: SolutionPair, aux: AuxProfiles, slack: float = BOUND_SLACK) -> BoundsReport:
    """Check ``zeta <= u``, ``xi <= v``, ``u - v <= zeta`` and interior positivity.

    Each check reports the node with the smallest margin; a check passes when
    that margin is at least ``-slack`` (positivity checks need a strictly
    positive margin).
    """
    if len(sol.grid) != len(aux.grid) or not np.allclose(sol.grid, aux.grid, atol=1e-14):
        raise GridMismatch("solution and auxiliary profiles live on different grids")
    x = sol.grid
    inner = slice(1, -1)
    margins = {
        "zeta<=u": sol.u - aux.zeta,
        "xi<=v": sol.v - aux.xi,
        "u-v<=zeta": aux.zeta - sol.w,
        "u>0": sol.u,
        "v>0": sol.v,
    }
    checks = []
    for name, marg in margins.items():
        m = marg[inner]
        j = int(np.argmin(m))
        worst = float(m[j])
        ok = worst > 0 if name.endswith(">0") else worst >= -slack
        checks.append(BoundCheck(name, float(x[inner][j]), worst, bool(ok)))
    return BoundsReport(tuple(checks))


@dataclass(frozen=True)
class BoundaryRate:
    c1: float
    c2: float
    side: str
    fit_window: float

    @property
    def ratio(self) -> float:
        return self.c2 / self.c1


def boundary_rate(values, grid=None, window: float = 0.05, side: str = "both") -> BoundaryRate:
    """Bracket ``values / d(x)`` near the boundary, ``d(x) = min(x, 1 - x)``."""
    values = np.asarray(values, dtype=float)
    if grid is None:
        grid = np.linspace(0.0, 1.0, len(values))
    grid = np.asarray(grid, dtype=float)
    d = np.minimum(grid, 1.0 - grid)
    left = (grid > 0) & (grid <= window) & (grid < 0.5)
    right = (grid < 1) & (1.0 - grid <= window) & (grid > 0.5)
    masks = {"left": [left], "right": [right], "both": [left, right]}[side]
    sel = np.zeros_like(left)
    for mk in masks:
        if mk.sum() < 8:
            raise DegenerateProfile(f"window {window} holds fewer than 8 nodes on a side")
        sel |= mk
    vals = values[sel]
    if np.any(vals <= 0):
        raise DegenerateProfile("profile is not positive inside the boundary window")
    q = vals / d[sel]
    return BoundaryRate(float(q.min()), float(q.max()), side, window)


def residual_norm(sol: SolutionPair, spec: ProblemSpec) -> float:
    """Infinity norm of the finite-difference residual at interior nodes."""
    ru, rv = fd_residual(sol.grid, sol.u, sol.v, spec)
    return float(max(np.max(np.abs(ru)), np.max(np.abs(rv))))


# ---------------------------------------------------------------------------
# uniqueness

@dataclass
class Cluster:
    slopes: tuple
    members: list
    spread: float


@dataclass
class UniquenessReport:
    n_starts: int
    seed: int
    clusters: list
    hypothesis_applies: bool
    rows: list = field(default_factory=list)   # (start_u, start_v, conv_u, conv_v, cluster_id)
    rejected: int = 0
    failed: int = 0

    @property
    def n_clusters(self) -> int:
        return len(self.clusters)

    def as_dict(self):
        return {
            "n_starts": self.n_starts,
            "seed": self.seed,
            "hypothesis_applies": self.hypothesis_applies,
            "n_clusters": self.n_clusters,
            "failed": self.failed,
            "rejected_nonpositive": self.rejected,
            "clusters": [{"slopes": list(c.slopes), "members": len(c.members),
                          "intra_sup_distance": c.spread} for c in self.clusters],
        }


def hypothesis_applies(spec: ProblemSpec) -> bool:
    e = spec.exponents
    sigma = e.detected_sigma()
    return bool(0 < e.q <= e.p <= 1 and sigma is not None and sigma >= 0)


def sample_starts(n_starts: int, seed: int, box=(0.1, 10.0)) -> np.ndarray:
    rng = np.random.default_rng(seed)
    lo, hi = math.log(box[0]), math.log(box[1])
    return np.exp(rng.uniform(lo, hi, size=(n_starts, 2)))


def _probe_one(args):
    spec, start, n = args
    try:
        sol = solve_shooting(spec, tuple(start), n=n)
    except Exception as exc:  # every failure mode is recorded, never fatal
        return None, type(exc).__name__
    return sol, None


def uniqueness_probe(spec: ProblemSpec, n_starts: int = 20, seed: int = 1,
                     cluster_tol: float = CLUSTER_TOL, n: int = 512,
                     workers: int = 1) -> UniquenessReport:
    """Solve from many slope pairs and cluster the converged solutions.

    Starts are log-uniform in ``[0.1, 10]^2``.  Converged runs that are not
    positive in the interior solve only the clamped extension of the system
    and are counted as rejected instead of being clustered.
    """
    spec.require_regular()
    if n_starts < 10:
        raise ValueError("uniqueness probe needs at least 10 starts")
    starts = sample_starts(n_starts, seed)
    jobs = [(spec, s, n) for s in starts]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_probe_one, jobs))
    else:
        results = [_probe_one(j) for j in jobs]

    clusters: list = []
    reps: list = []
    assign = []
    failed = rejected = 0
    for sol, err in results:
        if sol is None:
            failed += 1
            assign.append(None)
            continue
        if sol.violations():
            rejected += 1
            assign.append(None)
            continue
        vec = np.concatenate([sol.u, sol.v])
        for cid, rep in enumerate(reps):
            dist = float(np.max(np.abs(vec - rep)))
            if dist <= cluster_tol:
                clusters[cid].members.append(sol)
                clusters[cid].spread = max(clusters[cid].spread, dist)
                assign.append(cid)
                break
        else:
            reps.append(vec)
            clusters.append(Cluster(sol.meta.slopes, [sol], 0.0))
            assign.append(len(clusters) - 1)

    order = sorted(range(len(clusters)), key=lambda i: clusters[i].slopes)
    relabel = {old: new for new, old in enumerate(order)}
    clusters = [clusters[i] for i in order]
    rows = []
    for start, (sol, _), cid in zip(starts, results, assign):
        conv = sol.meta.slopes if sol is not None else (math.nan, math.nan)
        rows.append((float(start[0]), float(start[1]), conv[0], conv[1],
                     relabel[cid] if cid is not None else -1))
    return UniquenessReport(n_starts, seed, clusters, hypothesis_applies(spec), rows,
                            rejected, failed)

"""Command-line front end.

Every subcommand reads an optional JSON config (unknown keys are rejected),
writes its artifacts atomically into ``--out`` and finishes with a
``manifest.json``.  Exit codes: 0 success, 2 invalid config, 3 a solver did
not converge (the manifest is still written, with diagnostics).
"""

from __future__ import annotations

import argparse
import itertools
import json
import math
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from . import __version__
from . import bvp_solver as bvp
from .analysis import boundary_rate, residual_norm, uniqueness_probe, verify_bounds
from .criteria import classify_exponents
from .errors import (BlowUp, ConfigError, DomainError, GMLabError, JacobianSingular,
                     NewtonStall, NoConvergence)
from .io import write_columns, write_csv, write_json
from .nonlinearity import KFunction, PowerExponents
from .psi_profile import build_profile, export_csv, psi_asymptotic, verify_psi_ode

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NONCONVERGED = 3

COMMANDS = ("solve", "sweep", "classify", "psi", "verify", "probe")

SOLVE_KEYS = {"alpha", "beta", "epsilon", "p", "q", "sigma", "r", "s", "rho", "method",
              "grid_n", "ivp_tol", "init_slopes", "max_iter"}
COMMON_KEYS = {"output_dir", "seed"}
ALLOWED_KEYS = {
    "solve": SOLVE_KEYS,
    "verify": SOLVE_KEYS,
    "sweep": SOLVE_KEYS | {"schedule", "sigma_values", "continuation", "workers"},
    "probe": SOLVE_KEYS | {"n_starts", "workers"},
    "classify": {"p_values", "q_values", "sigma_values", "r_values", "s_values", "tuples"},
    "psi": {"k_exponent", "n_points", "ode_tol"},
}

HELP = {
    "solve": "Solve one instance.  Writes solution.csv (x,u,v,w), solution_meta.json, "
             "u.dat and v.dat (two columns: x value).",
    "sweep": "Solve many instances over sigma_values x schedule, or one continuation in "
             "epsilon per sigma when continuation=true.  Writes sweep.csv "
             "(index,sigma,epsilon,converged,iterations,residual,sup_u,sup_v,slope_u,"
             "slope_v,c1_u,c2_u,c1_v,c2_v,bounds_ok,error).",
    "classify": "Classify exponent tuples.  Writes classify.csv (p,q,r,s,verdict,condition).",
    "psi": "Tabulate Phi and Psi for k(t)=t^s.  Writes psi_profile.csv (t,phi,y,psi) and "
           "psi_summary.json.",
    "verify": "Solve with both solvers and check order bounds, residuals, agreement and "
              "boundary rates.  Writes verify.json.",
    "probe": "Multi-start uniqueness probe.  Writes uniqueness.json and uniqueness.csv "
             "(start_u,start_v,slope_u,slope_v,cluster).",
}


@dataclass
class ExperimentConfig:
    command: str
    output_dir: str = "out"
    seed: int = 1
    grid_n: int = 2048
    alpha: float = 1.0
    beta: float = 0.5
    epsilon: float = 1e-2
    p: float = 1.0
    q: float = 1.0
    sigma: Optional[float] = 0.0
    r: Optional[float] = None
    s: Optional[float] = None
    rho: dict = field(default_factory=lambda: {"kind": "sine", "amplitude": 1.0, "mode": 1})
    method: str = "shooting"
    ivp_tol: float = bvp.IVP_TOL
    init_slopes: Optional[list] = None
    max_iter: Optional[int] = None
    schedule: Optional[list] = None
    sigma_values: Optional[list] = None
    continuation: bool = False
    workers: Optional[int] = None
    n_starts: int = 20
    p_values: Optional[list] = None
    q_values: Optional[list] = None
    r_values: Optional[list] = None
    s_values: Optional[list] = None
    tuples: Optional[list] = None
    k_exponent: float = 3.0
    n_points: int = 201
    ode_tol: float = 1e-5

    def echo(self) -> dict:
        return asdict(self)


def _number(name, val, positive=False, nonneg=False):
    if isinstance(val, bool) or not isinstance(val, (int, float)) or not math.isfinite(val):
        raise ConfigError(f"{name} must be a finite number, got {val!r}")
    if positive and not val > 0:
        raise ConfigError(f"{name} must be positive, got {val}")
    if nonneg and val < 0:
        raise ConfigError(f"{name} must be nonnegative, got {val}")
    return float(val)


def _integer(name, val, minimum):
    if isinstance(val, bool) or not isinstance(val, int) or val < minimum:
        raise ConfigError(f"{name} must be an integer >= {minimum}, got {val!r}")
    return val


def _number_list(name, val, positive=False, nonneg=False):
    if not isinstance(val, list) or not val:
        raise ConfigError(f"{name} must be a non-empty list")
    return [_number(f"{name}[{i}]", v, positive, nonneg) for i, v in enumerate(val)]


def load_config(command: str, raw: dict) -> ExperimentConfig:
    """Validate a raw JSON mapping against the schema of ``command``."""
    if command not in COMMANDS:
        raise ConfigError(f"unknown subcommand {command!r}")
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")
    allowed = ALLOWED_KEYS[command] | COMMON_KEYS
    unknown = sorted(set(raw) - allowed)
    if unknown:
        raise ConfigError(f"unknown config keys for {command}: {', '.join(unknown)}")
    cfg = ExperimentConfig(command)
    for key, val in raw.items():
        setattr(cfg, key, val)
    _validate(cfg, set(raw))
    return cfg


def _validate(cfg: ExperimentConfig, given: set):
    cfg.seed = _integer("seed", cfg.seed, 0)
    cfg.grid_n = _integer("grid_n", cfg.grid_n, 256)
    if not isinstance(cfg.output_dir, str) or not cfg.output_dir:
        raise ConfigError("output_dir must be a non-empty string")
    cmd = cfg.command
    if cmd in ("solve", "verify", "sweep", "probe"):
        cfg.alpha = _number("alpha", cfg.alpha, positive=True)
        cfg.beta = _number("beta", cfg.beta, positive=True)
        cfg.epsilon = _number("epsilon", cfg.epsilon, positive=True)
        cfg.p = _number("p", cfg.p, positive=True)
        cfg.q = _number("q", cfg.q, positive=True)
        if "r" in given or "s" in given:
            if not {"r", "s"} <= given:
                raise ConfigError("r and s must be given together")
            if "sigma" in given:
                raise ConfigError("give either sigma or (r, s), not both")
            cfg.r = _number("r", cfg.r, positive=True)
            cfg.s = _number("s", cfg.s, positive=True)
            cfg.sigma = None
        else:
            cfg.sigma = _number("sigma", cfg.sigma, nonneg=True)
        if cfg.method not in ("shooting", "fd"):
            raise ConfigError(f"method must be 'shooting' or 'fd', got {cfg.method!r}")
        cfg.ivp_tol = _number("ivp_tol", cfg.ivp_tol, positive=True)
        if cfg.max_iter is not None:
            cfg.max_iter = _integer("max_iter", cfg.max_iter, 1)
        if cfg.init_slopes is not None:
            if not isinstance(cfg.init_slopes, list) or len(cfg.init_slopes) != 2:
                raise ConfigError("init_slopes must be a list of two numbers")
            cfg.init_slopes = _number_list("init_slopes", cfg.init_slopes)
        _rho_from(cfg.rho)
    if cmd == "sweep":
        if cfg.schedule is not None:
            cfg.schedule = _number_list("schedule", cfg.schedule, positive=True)
        if cfg.sigma_values is not None:
            if cfg.sigma is None:
                raise ConfigError("sigma_values cannot be combined with explicit r and s")
            cfg.sigma_values = _number_list("sigma_values", cfg.sigma_values, nonneg=True)
        if not isinstance(cfg.continuation, bool):
            raise ConfigError("continuation must be true or false")
        if cfg.continuation:
            sched = cfg.schedule or []
            if len(sched) < 1 or any(b >= a for a, b in zip(sched, sched[1:])):
                raise ConfigError("continuation needs a strictly decreasing schedule")
    if cmd in ("sweep", "probe") and cfg.workers is not None:
        cfg.workers = _integer("workers", cfg.workers, 1)
    if cmd == "probe":
        cfg.n_starts = _integer("n_starts", cfg.n_starts, 10)
    if cmd == "classify":
        if cfg.tuples is not None:
            if any(k in given for k in ("p_values", "q_values", "sigma_values", "r_values",
                                        "s_values")):
                raise ConfigError("tuples cannot be combined with value lists")
            if not isinstance(cfg.tuples, list) or not cfg.tuples:
                raise ConfigError("tuples must be a non-empty list")
            for i, t in enumerate(cfg.tuples):
                if not isinstance(t, list) or len(t) != 4:
                    raise ConfigError(f"tuples[{i}] must be [p, q, r, s]")
                _number_list(f"tuples[{i}]", t, positive=True)
        else:
            cfg.p_values = _number_list("p_values", cfg.p_values or [1.0], positive=True)
            cfg.q_values = _number_list("q_values", cfg.q_values or [1.0], positive=True)
            explicit = cfg.r_values is not None or cfg.s_values is not None
            if explicit:
                if cfg.r_values is None or cfg.s_values is None or cfg.sigma_values is not None:
                    raise ConfigError("give r_values with s_values, or sigma_values, not both")
                cfg.r_values = _number_list("r_values", cfg.r_values, positive=True)
                cfg.s_values = _number_list("s_values", cfg.s_values, positive=True)
            else:
                cfg.sigma_values = _number_list("sigma_values", cfg.sigma_values or [0.0],
                                                nonneg=True)
    if cmd == "psi":
        cfg.k_exponent = _number("k_exponent", cfg.k_exponent, positive=True)
        cfg.n_points = _integer("n_points", cfg.n_points, 2)
        cfg.ode_tol = _number("ode_tol", cfg.ode_tol, positive=True)


def _rho_from(raw):
    if not isinstance(raw, dict):
        raise ConfigError("rho must be an object with a 'kind' key")
    kind = raw.get("kind")
    if kind == "sine":
        extra = set(raw) - {"kind", "amplitude", "mode"}
        if extra:
            raise ConfigError(f"unknown rho keys: {', '.join(sorted(extra))}")
        amp = _number("rho.amplitude", raw.get("amplitude", 1.0), positive=True)
        mode = _integer("rho.mode", raw.get("mode", 1), 1)
        if mode != 1:
            raise ConfigError("rho.mode must be 1 (higher modes change sign on (0,1))")
        return bvp.SineSource(amp, mode)
    if kind == "constant":
        extra = set(raw) - {"kind", "value"}
        if extra:
            raise ConfigError(f"unknown rho keys: {', '.join(sorted(extra))}")
        return bvp.ConstantSource(_number("rho.value", raw.get("value", 1.0), positive=True))
    raise ConfigError(f"rho.kind must be 'sine' or 'constant', got {kind!r}")


def spec_from(cfg: ExperimentConfig, sigma: Optional[float] = None,
              epsilon: Optional[float] = None) -> bvp.ProblemSpec:
    if sigma is None and cfg.sigma is None:
        exps = PowerExponents(cfg.p, cfg.q, cfg.r, cfg.s)
    else:
        exps = PowerExponents.from_sigma(cfg.p, cfg.q, cfg.sigma if sigma is None else sigma)
    return bvp.ProblemSpec(cfg.alpha, cfg.beta, cfg.epsilon if epsilon is None else epsilon,
                           _rho_from(cfg.rho), exps)


# ---------------------------------------------------------------------------
# artifacts

def emit_plotdata(sol: bvp.SolutionPair, out) -> list:
    """Write ``u.dat`` and ``v.dat`` (x and value, 12 significant digits)."""
    out = Path(out)
    paths = []
    for name, vals in (("u", sol.u), ("v", sol.v)):
        target = out / f"{name}.dat"
        try:
            paths.append(write_columns(target, sol.grid, vals))
        except OSError as exc:
            raise OSError(f"could not write {target}: {exc}") from exc
    return paths


def _meta_payload(sol: bvp.SolutionPair, spec: bvp.ProblemSpec) -> dict:
    m = sol.meta
    return {
        "method": m.method,
        "residual_norm": m.residual_norm,
        "iterations": m.iterations,
        "epsilon_used": m.epsilon_used,
        "tolerance": m.tolerance,
        "slopes": m.slopes,
        "end_slopes": m.end_slopes,
        "extras": m.extras,
        "grid_nodes": len(sol.grid),
        "sup_norms": sol.sup_norms(),
        "spec": {"alpha": spec.alpha, "beta": spec.beta, "epsilon": spec.epsilon,
                 "exponents": spec.exponents.as_tuple(), "rho": repr(spec.rho)},
    }


def _solve(cfg, spec):
    extra = {} if cfg.max_iter is None else {"max_iter": cfg.max_iter}
    if cfg.method == "fd":
        return bvp.solve_fd_newton(spec, n=cfg.grid_n, **extra)
    return bvp.solve_shooting(spec, cfg.init_slopes, n=cfg.grid_n, ivp_tol=cfg.ivp_tol,
                              **extra)


def cmd_solve(cfg, out):
    spec = spec_from(cfg)
    sol = _solve(cfg, spec)
    rows = zip(sol.grid.tolist(), sol.u.tolist(), sol.v.tolist(), sol.w.tolist())
    files = [write_csv(out / "solution.csv", ["x", "u", "v", "w"], rows),
             write_json(out / "solution_meta.json", _meta_payload(sol, spec))]
    files += emit_plotdata(sol, out)
    return files, {"residual_norm": sol.meta.residual_norm}


def _sweep_job(job):
    kind, cfg, sigma, eps_list = job
    rows = []
    try:
        spec = spec_from(cfg, sigma=sigma, epsilon=eps_list[0])
        if kind == "continuation":
            sols = bvp.continue_in_epsilon(spec, eps_list, method=cfg.method, n=cfg.grid_n,
                                           init_slopes=cfg.init_slopes)
        else:
            sols = [_solve(cfg, spec)]
    except (NoConvergence, NewtonStall, BlowUp, JacobianSingular) as exc:
        return [(sigma, eps_list[-1], None, str(exc))]
    for sol in sols:
        sp = spec.with_epsilon(sol.meta.epsilon_used)
        aux = bvp.auxiliary_profiles(sp, cfg.grid_n)
        rows.append((sigma, sol.meta.epsilon_used, _sweep_stats(sol, aux), ""))
    return rows


def _sweep_stats(sol, aux):
    ru, rv = boundary_rate(sol.u, sol.grid), boundary_rate(sol.v, sol.grid)
    su, sv = sol.sup_norms()
    return (sol.meta.iterations, sol.meta.residual_norm, su, sv, sol.meta.slopes[0],
            sol.meta.slopes[1], ru.c1, ru.c2, rv.c1, rv.c2, verify_bounds(sol, aux).overall)


def pool_size(flag: Optional[int]) -> int:
    env = os.environ.get("GM_LAB_THREADS")
    if env:
        try:
            n = int(env)
        except ValueError:
            raise ConfigError(f"GM_LAB_THREADS must be an integer, got {env!r}")
        if n < 1:
            raise ConfigError("GM_LAB_THREADS must be at least 1")
        return n
    if flag is not None:
        return flag
    return os.cpu_count() or 1


def cmd_sweep(cfg, out, workers):
    sigmas = cfg.sigma_values or [cfg.sigma]
    sched = cfg.schedule or [cfg.epsilon]
    if cfg.continuation:
        jobs = [("continuation", cfg, sg, sched) for sg in sigmas]
    else:
        jobs = [("single", cfg, sg, [e]) for sg, e in itertools.product(sigmas, sched)]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_sweep_job, jobs))   # map keeps input order
    else:
        results = [_sweep_job(j) for j in jobs]
    header = ["index", "sigma", "epsilon", "converged", "iterations", "residual", "sup_u",
              "sup_v", "slope_u", "slope_v", "c1_u", "c2_u", "c1_v", "c2_v", "bounds_ok",
              "error"]
    rows = []
    failures = 0
    for res in results:
        for sigma, eps, stats, err in res:
            sg = "" if sigma is None else sigma
            if stats is None:
                failures += 1
                rows.append([len(rows), sg, eps, False] + [""] * 11 + [err])
            else:
                rows.append([len(rows), sg, eps, True, *stats, ""])
    files = [write_csv(out / "sweep.csv", header, rows)]
    diag = {"failures": failures, "rows": len(rows)}
    return files, diag, failures == 0


def classify_rows(cfg) -> list:
    if cfg.tuples is not None:
        tuples = [tuple(float(x) for x in t) for t in cfg.tuples]
    elif cfg.r_values is not None:
        tuples = list(itertools.product(cfg.p_values, cfg.q_values, cfg.r_values, cfg.s_values))
    else:
        tuples = [(p, q, p + sg, q + sg)
                  for p, q, sg in itertools.product(cfg.p_values, cfg.q_values, cfg.sigma_values)]
    rows = []
    for p, q, r, s in tuples:
        v = classify_exponents(PowerExponents(p, q, r, s))
        rows.append((p, q, r, s, v.kind, v.condition))
    return rows


def cmd_classify(cfg, out):
    rows = classify_rows(cfg)
    files = [write_csv(out / "classify.csv", ["p", "q", "r", "s", "verdict", "condition"], rows)]
    counts = {}
    for row in rows:
        counts[row[4]] = counts.get(row[4], 0) + 1
    return files, {"rows": len(rows), "counts": counts}


def cmd_psi(cfg, out):
    k = KFunction.power(cfg.k_exponent)
    prof = build_profile(k)
    form = psi_asymptotic(cfg.k_exponent)
    summary = {"k_exponent": cfg.k_exponent, "a": None if prof.divergent else prof.a,
               "divergent": prof.divergent, "asymptotic": asdict(form)}
    if not prof.divergent:
        rep = verify_psi_ode(prof, tol=cfg.ode_tol)
        summary["ode_check"] = {"max_defect": rep.max_defect, "noise": rep.noise,
                                "pass": rep.pass_, "worst_y": rep.worst_y, "tol": cfg.ode_tol}
    files = [export_csv(prof, out / "psi_profile.csv", cfg.n_points),
             write_json(out / "psi_summary.json", summary)]
    return files, {}


def cmd_verify(cfg, out):
    spec = spec_from(cfg)
    n = cfg.grid_n
    shoot = bvp.solve_shooting(spec, cfg.init_slopes, n=n, ivp_tol=cfg.ivp_tol)
    fd = bvp.solve_fd_newton(spec, n=n)
    aux = bvp.auxiliary_profiles(spec, n)
    report = {"grid_n": n, "solvers": {}}
    for name, sol in (("shooting", shoot), ("fd", fd)):
        b = verify_bounds(sol, aux)
        ru, rv = boundary_rate(sol.u, sol.grid), boundary_rate(sol.v, sol.grid)
        report["solvers"][name] = {
            "converged_residual": sol.meta.residual_norm,
            "fd_residual_norm": residual_norm(sol, spec),
            "bounds_overall": b.overall,
            "bounds": [asdict(c) for c in b.checks],
            "slopes": sol.meta.slopes, "end_slopes": sol.meta.end_slopes,
            "rate_u": [ru.c1, ru.c2], "rate_v": [rv.c1, rv.c2],
        }
    gap = float(max(np.max(np.abs(shoot.u - fd.u)), np.max(np.abs(shoot.v - fd.v))))
    report["sup_gap"] = gap
    report["all_passed"] = bool(all(r["bounds_overall"] for r in report["solvers"].values())
                                and gap <= 1e-4)
    return [write_json(out / "verify.json", report)], {"all_passed": report["all_passed"]}


def cmd_probe(cfg, out, workers):
    spec = spec_from(cfg)
    rep = uniqueness_probe(spec, cfg.n_starts, cfg.seed, n=min(cfg.grid_n, 512),
                           workers=workers)
    files = [write_json(out / "uniqueness.json", rep.as_dict()),
             write_csv(out / "uniqueness.csv",
                       ["start_u", "start_v", "slope_u", "slope_v", "cluster"], rep.rows)]
    return files, {"n_clusters": rep.n_clusters}


# ---------------------------------------------------------------------------
# driver

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gmlab", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sp = sub.add_parser(name, help=HELP[name].split(".")[0], description=HELP[name])
        sp.add_argument("--config", type=Path, help="JSON config file")
        sp.add_argument("--out", type=Path, help="output directory (default: config or ./out)")
        sp.add_argument("--seed", type=int, help="random seed (probe)")
        sp.add_argument("--grid", type=int, help="number of grid intervals")
        sp.add_argument("--quiet", action="store_true", help="suppress progress messages")
        if name in ("sweep", "probe"):
            sp.add_argument("--workers", type=int,
                            help="worker processes (default: CPU count; GM_LAB_THREADS wins)")
    return parser


def _say(args, msg):
    if not args.quiet:
        print(msg, file=sys.stderr)


def run(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    t0 = time.perf_counter()
    try:
        raw = {}
        if args.config is not None:
            try:
                raw = json.loads(args.config.read_text())
            except (OSError, json.JSONDecodeError) as exc:
                raise ConfigError(f"cannot read config {args.config}: {exc}")
        cfg = load_config(args.command, raw)
        if args.seed is not None:
            cfg.seed = _integer("--seed", args.seed, 0)
        if args.grid is not None:
            cfg.grid_n = _integer("--grid", args.grid, 256)
        if args.out is not None:
            cfg.output_dir = str(args.out)
        workers = None
        if args.command in ("sweep", "probe"):
            flag = args.workers if args.workers is not None else cfg.workers
            if flag is not None:
                _integer("--workers", flag, 1)
            workers = pool_size(flag)
        if args.command in ("solve", "verify", "probe"):
            spec_from(cfg)   # surfaces precondition violations before any work
    except (ConfigError, DomainError) as exc:
        print(f"gmlab: invalid configuration: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    status, code, diag, files = "ok", EXIT_OK, {}, []
    try:
        _say(args, f"gmlab {args.command}: writing to {out}")
        if args.command == "solve":
            files, diag = cmd_solve(cfg, out)
        elif args.command == "sweep":
            files, diag, ok = cmd_sweep(cfg, out, workers)
            if not ok:
                status, code = "nonconverged", EXIT_NONCONVERGED
        elif args.command == "classify":
            files, diag = cmd_classify(cfg, out)
        elif args.command == "psi":
            files, diag = cmd_psi(cfg, out)
        elif args.command == "verify":
            files, diag = cmd_verify(cfg, out)
        else:
            files, diag = cmd_probe(cfg, out, workers)
    except (NoConvergence, NewtonStall, BlowUp, JacobianSingular) as exc:
        status, code = "nonconverged", EXIT_NONCONVERGED
        diag = {"error": type(exc).__name__, "message": str(exc)}
        if isinstance(exc, NoConvergence):
            diag.update(best_residual=exc.best_residual,
                        last=None if exc.last is None else np.asarray(exc.last).tolist(),
                        iterations=exc.iterations)
        print(f"gmlab: solver did not converge: {exc}", file=sys.stderr)
    except (ConfigError, DomainError) as exc:
        print(f"gmlab: invalid configuration: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except GMLabError as exc:
        print(f"gmlab: {type(exc).__name__}: {exc}", file=sys.stderr)
        status, code = "error", 1
        diag = {"error": type(exc).__name__, "message": str(exc)}

    manifest = {
        "command": args.command,
        "status": status,
        "exit_code": code,
        "config": cfg.echo(),
        "artifacts": sorted(Path(f).name for f in files),
        "diagnostics": diag,
        "tolerances": {"ivp_tol": cfg.ivp_tol, "shooting_tol": bvp.SHOOT_TOL,
                       "fd_tol": bvp.FD_TOL, "state_cap": bvp.STATE_CAP},
        "version": __version__,
        "wall_time_s": round(time.perf_counter() - t0, 3),
    }
    write_json(out / "manifest.json", manifest)
    _say(args, f"gmlab {args.command}: {status} ({len(files)} artifacts)")
    return code


def main():
    sys.exit(run())

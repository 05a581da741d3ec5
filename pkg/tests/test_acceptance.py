"""Acceptance criteria, one test per criterion.

Each test prints a single ``PASS``/``FAIL`` line (visible under ``pytest -v``)
before asserting, so the report survives a failure.
"""
import itertools
import json
import math
import time

import numpy as np

import oracles
from gmlab.analysis import boundary_rate, uniqueness_probe, verify_bounds
from gmlab.bvp_solver import (ProblemSpec, SineSource, auxiliary_profiles, continue_in_epsilon,
                              solve_fd_newton, solve_shooting, solve_zeta, uniform_grid)
from gmlab.cli import emit_plotdata, run
from gmlab.criteria import (CASE_I, CASE_II, CASE_III, EXISTS, NONEXISTENT, classify_exponents,
                            nonexistence_integral_test)
from gmlab.nonlinearity import KFunction, NonlinearityQuad, PowerExponents
from gmlab.psi_profile import build_profile, phi_of, psi_of, verify_psi_ode

REF_N = 2048
SUP_BOUND = 1.0   # schedule-independent bound on the sup-norms along the eps schedule


def report(capsys, number, ok, detail):
    with capsys.disabled():
        print(f"\n{'PASS' if ok else 'FAIL'} criterion {number}: {detail}")
    assert ok, detail


def spec_for(p, q, sigma, alpha=1.0, beta=0.5, epsilon=1e-2):
    return ProblemSpec(alpha, beta, epsilon, exponents=PowerExponents.from_sigma(p, q, sigma))


def test_1_reference_structure(ref_shoot, ref_fd, tmp_path, capsys):
    ok, notes = True, []
    for sigma in (0, 2):
        sh, fd = ref_shoot[sigma], ref_fd[sigma]
        for sol in (sh, fd):
            assert len(sol.grid) == REF_N + 1
            interior = min(sol.u[1:-1].min(), sol.v[1:-1].min()) > 0
            ends = sol.u[0] == sol.u[-1] == sol.v[0] == sol.v[-1] == 0.0
            ok &= bool(interior and ends)
        gap = max(np.max(np.abs(sh.u - fd.u)), np.max(np.abs(sh.v - fd.v)))
        ok &= gap <= 1e-4
        out = tmp_path / f"sigma{sigma}"
        out.mkdir()
        files = emit_plotdata(sh, out)
        ok &= all(f.stat().st_size > 0 for f in files) and len(files) == 2
        notes.append(f"sigma={sigma} gap={gap:.2e}")
    report(capsys, 1, ok, "both solvers positive, zero ends, plot data written; " + ", ".join(notes))


def test_2_closed_form_oracles(capsys):
    n = 1024
    x = uniform_grid(n)
    z = solve_zeta(1.0, SineSource(), n)
    z_err = float(np.max(np.abs(z - np.sin(np.pi * x) / (1 + np.pi ** 2))))

    lin = ProblemSpec.reference()
    lin = ProblemSpec(lin.alpha, lin.beta, lin.epsilon, exponents=lin.exponents, test_mode=True)
    slope = solve_shooting(lin).meta.slopes[0]
    slope_err = abs(slope - np.pi / (1 + np.pi ** 2))

    cubic = KFunction.power(3.0)
    ts = np.linspace(0.02, 0.98, 20)
    phi_err = max(abs(phi_of(float(t), cubic) - (1 - math.sqrt(1 - t * t))) for t in ts)

    ok = z_err <= 5e-7 and slope_err <= 1e-8 and phi_err <= 1e-8
    report(capsys, 2, ok, f"zeta err={z_err:.1e}, slope err={slope_err:.1e}, "
                          f"Phi err={phi_err:.1e}")


def test_3_psi_asymptotics(capsys):
    cubic = build_profile(KFunction.power(3.0))
    ratios = [psi_of(y, cubic) / (math.sqrt(2) * math.sqrt(y)) for y in (1e-2, 1e-3, 1e-4)]
    devs = [abs(r - 1) for r in ratios]
    cubic_ok = 0.98 <= ratios[-1] <= 1.02 and devs[0] > devs[1] > devs[2]

    half = build_profile(KFunction.power(0.5))
    y = 1e-5
    half_ratio = psi_of(y, half) / y
    half_ok = abs(half_ratio - 2) <= 0.02

    ode = verify_psi_ode(oracles.psi_cubic, k=KFunction.power(3.0), a=1.0, tol=1e-5)
    ok = cubic_ok and half_ok and ode.max_defect <= 1e-5
    report(capsys, 3, ok, f"s=3 ratios={[round(r, 5) for r in ratios]}, "
                          f"s=1/2 ratio={half_ratio:.5f}, ODE defect={ode.max_defect:.1e}")


def test_4_classifier_table(capsys):
    examples = {(1, 4, 1, 1): (NONEXISTENT, CASE_II), (1, 8, 1, 3): (NONEXISTENT, CASE_I),
                (1, 3, 1, 0.5): (NONEXISTENT, CASE_III), (1, 1, 1, 1): (EXISTS, None)}
    table_ok = True
    for tup, (kind, case) in examples.items():
        v = classify_exponents(PowerExponents(*tup))
        table_ok &= v.kind == kind and (case is None or v.condition == case)

    grid = [0.25, 0.5, 0.75, 1.0, 1.5, 2.0, 3.0, 4.0, 6.0, 8.0]
    t0 = time.perf_counter()
    collisions = disagreements = exists = 0
    for p, q, r, s in itertools.product(grid, grid, grid, grid):
        v = classify_exponents(PowerExponents(p, q, r, s))
        nonexist = oracles.power_nonexistence(p, q, s)
        exist_cond = math.isclose(r - p, s - q) and r - p >= 0 and p - q < 1
        collisions += exist_cond and nonexist
        disagreements += (v.kind == NONEXISTENT) != nonexist
        disagreements += (v.kind == EXISTS) != exist_cond
        exists += v.kind == EXISTS
    elapsed = time.perf_counter() - t0
    ok = table_ok and collisions == 0 and disagreements == 0 and exists > 0 and elapsed <= 10
    report(capsys, 4, ok, f"examples ok={table_ok}, 10^4 scan: {collisions} collisions, "
                          f"{disagreements} disagreements, {exists} Exists, {elapsed:.2f} s")


def test_5_integral_test_concordance(capsys):
    rng = np.random.default_rng(2024)
    tuples = []
    while len(tuples) < 200:
        p, q, r, s = rng.uniform(0.1, 5.0), rng.uniform(0.1, 14.0), rng.uniform(0.1, 5.0), \
            rng.uniform(0.1, 6.0)
        e = oracles.integrand_exponent(p, q, s) if s != 1 else math.nan
        if abs(s - 1) >= 0.1 and abs(e + 1) >= 0.1:
            tuples.append((p, q, r, s))
    disagree, nonexist = [], 0
    for tup in tuples:
        quad = NonlinearityQuad.powers(*tup)
        rep = nonexistence_integral_test(quad, 0.5, 2.0, build_profile(quad.k))
        verdict = classify_exponents(PowerExponents(*tup)).kind == NONEXISTENT
        nonexist += verdict
        if rep.divergent != verdict:
            disagree.append(tup)
    ok = not disagree and 0 < nonexist < len(tuples)
    report(capsys, 5, ok, f"{len(tuples)} tuples ({nonexist} nonexistent), "
                          f"{len(disagree)} disagreements")


REGRESSION = [(ab, sigma, pq) for ab in ((1.0, 0.5), (2.0, 1.0)) for sigma in (0.0, 1.0, 2.0)
              for pq in ((0.5, 1.0), (1.0, 1.0), (1.4, 0.5))]


def test_6_order_bounds(capsys):
    failures, worst, checked = [], math.inf, 0
    for (alpha, beta), sigma, (p, q) in REGRESSION:
        spec = spec_for(p, q, sigma, alpha, beta)
        aux = auxiliary_profiles(spec, REF_N)
        for sol in (solve_shooting(spec, n=REF_N), solve_fd_newton(spec, n=REF_N)):
            rep = verify_bounds(sol, aux)
            checked += 1
            worst = min(worst, min(c.worst_slack for c in rep.checks))
            if not rep.overall:
                failures.append((alpha, beta, sigma, p, q, sol.meta.method, rep.failed()))
    ok = len(REGRESSION) >= 12 and not failures
    report(capsys, 6, ok, f"{len(REGRESSION)} specs, {checked} solutions, "
                          f"{len(failures)} failures, smallest slack={worst:.2e}")


def test_7_continuation(capsys):
    t0 = time.perf_counter()
    ok, notes = True, []
    for sigma in (0.0, 2.0):
        chain = continue_in_epsilon(ProblemSpec.reference(sigma), [1e-1, 1e-2, 1e-3, 1e-4],
                                    n=REF_N)
        sups = [max(s.sup_norms()) for s in chain]
        changes = []
        for name in ("u", "v"):
            ratios = [boundary_rate(getattr(s, name), s.grid).ratio for s in chain[-2:]]
            changes.append(abs(ratios[1] / ratios[0] - 1))
        ok &= len(chain) == 4 and max(sups) <= SUP_BOUND and max(changes) <= 0.10
        notes.append(f"sigma={sigma:g}: max sup={max(sups):.4f}, "
                     f"c2/c1 change u={changes[0]:.3%} v={changes[1]:.3%}")
    elapsed = time.perf_counter() - t0
    ok &= elapsed <= 120
    report(capsys, 7, ok, "; ".join(notes) + f"; bound {SUP_BOUND}, {elapsed:.1f} s")


def test_8_uniqueness(capsys):
    counts = {}
    for pqs in ((1.0, 1.0, 0.0), (1.0, 0.5, 1.0)):
        spec = spec_for(*pqs)
        for seed in range(1, 6):
            rep = uniqueness_probe(spec, n_starts=20, seed=seed, cluster_tol=1e-6)
            counts[pqs, seed] = (rep.n_clusters, rep.failed, rep.rejected)
    ok = all(c[0] == 1 for c in counts.values())
    extra = sum(c[1] + c[2] for c in counts.values())
    report(capsys, 8, ok, f"clusters per run {sorted({c[0] for c in counts.values()})}, "
                          f"{len(counts)} runs, {extra} failed or rejected starts")


DETERMINISM_CONFIGS = {
    "solve": {"sigma": 2.0},
    "verify": {},
    "sweep": {"sigma_values": [0.0, 2.0], "schedule": [1e-1, 1e-2, 1e-3, 1e-4],
              "continuation": True},
    "classify": {"p_values": [0.5, 1.0, 2.0], "q_values": [0.5, 3.0, 8.0],
                 "r_values": [1.0], "s_values": [0.5, 1.0, 3.0]},
    "psi": {"k_exponent": 3.0},
    "probe": {"n_starts": 20, "p": 1.0, "q": 0.5, "sigma": 1.0},
}


def _artifacts(out):
    files = {p.name: p.read_bytes() for p in sorted(out.iterdir()) if p.name != "manifest.json"}
    man = json.loads((out / "manifest.json").read_text())
    man.pop("wall_time_s")
    man["config"].pop("output_dir")
    return files, man


def test_9_determinism(tmp_path, capsys, monkeypatch):
    monkeypatch.delenv("GM_LAB_THREADS", raising=False)
    differing = []
    for cmd, payload in DETERMINISM_CONFIGS.items():
        cfg = tmp_path / f"{cmd}.json"
        cfg.write_text(json.dumps({**payload, "seed": 3}))
        runs = []
        for rep in range(2):
            out = tmp_path / f"{cmd}_{rep}"
            argv = [cmd, "--config", str(cfg), "--out", str(out), "--quiet"]
            if cmd in ("sweep", "probe"):
                argv += ["--workers", "1"]
            assert run(argv) == 0
            runs.append(_artifacts(out))
        if runs[0] != runs[1]:
            differing.append(cmd)
    ok = not differing
    report(capsys, 9, ok, f"{len(DETERMINISM_CONFIGS)} commands run twice, "
                          f"differing: {differing or 'none'}")

"""Acceptance criteria 1-9, one test and one PASS/FAIL line each.

The lines are printed as they are produced and repeated in pytest's terminal
summary.  Run ``python tests/test_acceptance.py`` for the lines alone.
"""

import json
import math
import time

import numpy as np

import conftest
from occrelax import (Domain, Grid, GriddedMeasure, builtin, centroid, check_superposition, classical_value,
                      cli, concentrate, density, extract_sheets, grid_for, integrate, recover_classical,
                      solve, solve_relaxation, two_curve_measure)
from occrelax import gapx
from occrelax.lp import EQ, LE, LinearProgram, certificate_ok, verify
from occrelax.measure import snapping_bound

from lp_oracle import oracle
from test_lp import _corpus
from test_sheets import random_atomic_measure


def report(number, ok, detail):
    line = f"{'PASS' if ok else 'FAIL'} criterion {number}: {detail}"
    print(line)
    conftest.ACCEPTANCE_LINES.append(line)
    assert ok, line


def _const(c):
    return lambda x: np.full(len(x), float(c))


def test_criterion_1_double_well(tmp_path):
    t0 = time.perf_counter()
    code = cli.main(["relax", "--builtin", "double-well", "--nz", "3", "--out", str(tmp_path)])
    with open(tmp_path / "result.json") as fh:
        m_r = json.load(fh)["M_r"]
    c = classical_value(builtin("double-well"), _const(0.0))
    dt = time.perf_counter() - t0
    g = grid_for(builtin("double-well"), nz=3)
    grid_ok = g.y[:, 0].tolist() == [-1.0, 0.0, 1.0] and {-1.0, 0.0, 1.0} <= set(g.z[:, 0].tolist())
    ok = code == 0 and abs(m_r) <= 1e-8 and abs(c - 1) <= 1e-9 and dt < 1.0 and grid_ok
    report(1, ok, f"double well M_r={m_r:.3g} (<=1e-8), classical={c:.12g} (1 +- 1e-9), {dt:.2f}s (<1s)")


def test_criterion_2_gap_ineq():
    t0 = time.perf_counter()
    p = builtin("gap-ineq")
    g = grid_for(p)
    has_nodes = {0.0, 1.0} <= set(g.y[:, 0].tolist())
    m_r = solve_relaxation(p, g).value
    # restricted 2-atom LP: weight a0 on y=0 and a1 on y=1 with the integral constraint 1 - 10 y
    atoms = solve(LinearProgram([0.0, 1.0], [[1.0, 1.0], [1.0, -9.0]], [EQ, LE], [1.0, 0.0]))
    st, brute = oracle([0, 1], [[1, 1], [1, -9]], [EQ, LE], [1, 0], [0, 0], [np.inf, np.inf])
    c = classical_value(p, _const(1.0))
    dt = time.perf_counter() - t0
    ok = (has_nodes and abs(m_r - 0.1) <= 1e-6 and atoms.objective == 0.1 and brute == 0.1
          and abs(c - 1) <= 1e-9 and dt < 5)
    report(2, ok, f"gap-ineq M_r={m_r:.12g} (0.1 +- 1e-6), 2-atom LP={atoms.objective!r}, "
                  f"classical={c:.12g}, {dt:.2f}s (<5s)")


def test_criterion_3_gap_eq():
    p = builtin("gap-eq")
    m_r = solve_relaxation(p).value
    atoms = solve(LinearProgram([0.0, 1.0, 2.0], [[1, 1, 1], [0, 1, 0.5]], [EQ, EQ], [1.0, 0.5]))
    c = classical_value(p, _const(2.0))
    ok = abs(m_r - 0.5) <= 1e-6 and abs(atoms.objective - 0.5) <= 1e-15 and abs(c - 2) <= 1e-9
    report(3, ok, f"gap-eq M_r={m_r:.12g} (0.5 +- 1e-6), 3-atom LP={atoms.objective!r}, classical={c:.12g}")


def test_criterion_4_two_curves():
    t0 = time.perf_counter()
    mu = two_curve_measure(10)
    rho = density(mu)
    values = set(np.unique(rho.rho).tolist())
    fam = extract_sheets(rho, mu)
    g = mu.grid
    x = g.x[:, 0]
    gam, eta = 1.0 - x, x
    left = x < 0.5
    match = True
    for k, r in enumerate(fam.levels):
        take_gamma = np.where(left, (-1 < r) & (r < -1 / 3), (-2 / 3 < r) & (r < 0))
        want = g.nearest_y(np.where(take_gamma, gam, eta)[:, None])
        match &= bool(np.array_equal(fam.index[k], want))
    dev = max(check_superposition(mu, fam).values())
    dt = time.perf_counter() - t0
    ok = values == {0.0, -1 / 3, -2 / 3, -1.0} and match and dev <= 1e-9 and dt < 1
    report(4, ok, f"rho values {sorted(values)}, sheets match the two curves: {match}, "
                  f"superposition deviation {dev:.2g} (<=1e-9), {dt:.2f}s (<1s)")


def test_criterion_5_monotone_range():
    bad = []
    for seed in range(100):
        mu = random_atomic_measure(seed)
        rho = density(mu).rho
        fam = extract_sheets(density(mu), mu)
        order = np.argsort(fam.levels)[::-1]
        prof = mu.weights.sum(axis=(1, 2)) / mu.grid.cell_volume
        checks = (rho.min() >= -1 and rho.max() <= 0, np.all(np.diff(rho, axis=1) <= 0),
                  np.all(np.diff(fam.values[order, :, 0], axis=0) >= 0), np.ptp(prof) <= 1e-6)
        if not all(checks):
            bad.append(seed)
    report(5, not bad, f"100 random atomic measures: range, column monotonicity, sheet order and "
                       f"constant projection hold (failures: {bad or 'none'})")


def test_criterion_6_codim_one_no_gap():
    t0 = time.perf_counter()
    p = builtin("codim1-demo")
    eps = []
    for nx in (12, 16):
        r = solve_relaxation(p, grid_for(p, nx=nx, ny=9, nz=5))
        rep = recover_classical(p, r)
        eps.append((rep.relative_gap, rep.best_value, r.value, rep.no_gap_asserted))
    dt = time.perf_counter() - t0
    (e0, b0, m0, a0), (e1, _, m1, _) = eps
    ok = a0 and b0 <= m0 * 1.05 and e0 <= 0.05 and e1 < e0 and dt < 60
    report(6, ok, f"codim1-demo 12x12x9x25: best={b0:.6f} M_r={m0:.6f} eps={e0:.4f} (<=0.05); "
                  f"16x16: eps={e1:.4f} (shrinks); {dt:.1f}s (<60s)")


def test_criterion_7_counterexample():
    t0 = time.perf_counter()
    rep, search = gapx.verify_gap(32, 128, inits=50, steps=500, seed=42, invariant_points=100_000)
    reg = gapx.regularity_probe(200, seed=0)
    dt = time.perf_counter() - t0
    inv_ok = all(v["ok"] for v in rep["invariant_checks"].values())
    hess_ok = reg["z_hessian_error"] <= 1e-6
    bound = rep["caseA_bound"]
    ok = (rep["relaxed_value"] <= 1e-8 and abs(bound - (1 / 41) ** 2 * 3 * math.pi / 8) <= 1e-15
          and abs(bound - 7.01e-4) <= 5e-6 and rep["classical_min_found"] >= 1e-4 and inv_ok and hess_ok
          and dt < 300)
    report(7, ok, f"relaxed={rep['relaxed_value']:.3g} (<=1e-8), caseA bound={bound:.6g}, "
                  f"classical min={rep['classical_min_found']:.4g} (>=1e-4), invariants at 1e5 points: {inv_ok}, "
                  f"z-Hessian 2I: {hess_ok}, {dt:.0f}s (<300s)")


def test_criterion_8_lp():
    corpus = _corpus(200, seed=2024)
    agree = cert = True
    worst = 0.0
    first, second = [], []
    for lp in corpus:
        st, want = oracle(lp.c, lp.A.toarray(), lp.rel, lp.b, lp.lb, lp.ub)
        sol = solve(lp)
        agree &= sol.status == st
        if st == "optimal" and sol.ok:
            err = abs(sol.objective - want)
            worst = max(worst, err)
            agree &= err <= 1e-9
            cert &= certificate_ok(lp, sol)
        first.append((sol.status, None if sol.x is None else sol.x.tobytes()))
    for lp in corpus:
        sol = solve(lp)
        second.append((sol.status, None if sol.x is None else sol.x.tobytes()))
    det = first == second
    report(8, agree and cert and det, f"200 random LPs: oracle agreement {agree} (worst {worst:.1e}), "
                                      f"certificates {cert}, bitwise deterministic {det}")


def test_criterion_9_jensen():
    dom = Domain("interval", (0.0, 1.0))
    g = Grid.regular(dom, [[-1, 1]], [[-2, 2]], 6, 4, 9)
    sq = lambda x, y, z: (z ** 2).sum(axis=1)
    h = snapping_bound(g)
    worst = -np.inf
    for seed in range(100):
        rng = np.random.default_rng(seed)
        w = rng.random(g.shape) * (rng.random(g.shape) < 0.4)
        mu = GriddedMeasure(g, w, np.zeros((g.nb, 4)))
        eps = (4.0 * h + h * h) * mu.mass  # |Z| <= 2, each centroid moves by at most h
        worst = max(worst, integrate(concentrate(mu), sq) - integrate(mu, sq) - eps)
    m_r = solve_relaxation(builtin("double-well-convexified")).value
    ok = worst <= 0 and abs(m_r) <= 1e-8
    report(9, ok, f"Jensen on 100 random measures: max excess over eps_grid {worst:.3g} (<=0); "
                  f"convexified double well M_r={m_r:.3g} (<=1e-8)")


if __name__ == "__main__":
    import pathlib
    import tempfile

    for name, fn in sorted(globals().items()):
        if name.startswith("test_criterion_"):
            try:
                if "tmp_path" in fn.__code__.co_varnames[:fn.__code__.co_argcount]:
                    with tempfile.TemporaryDirectory() as d:
                        fn(pathlib.Path(d))
                else:
                    fn()
            except AssertionError:
                pass

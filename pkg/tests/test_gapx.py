"""Two-dimensional counterexample: fields, invariants, balanced angle, lower report and search."""

import math

import numpy as np
import pytest

from occrelax import gapx
from occrelax.gapx import PolarGrid


def test_constants():
    assert gapx.E == 1 / 41
    assert gapx.F_CONST == pytest.approx(1 / 40 - 1 / 41, rel=1e-15)
    assert gapx.CORONA_AREA == pytest.approx(3 * math.pi / 4, rel=1e-15)
    assert gapx.CASE_A_BOUND == pytest.approx((1 / 41) ** 2 * 3 * math.pi / 8, rel=1e-15)
    assert abs(gapx.CASE_A_BOUND - 7.01e-4) < 5e-6
    assert PolarGrid.corona(8, 32).area.sum() == pytest.approx(3 * math.pi / 4, rel=1e-12)


def test_branches_at_theta_zero():
    f = gapx.eval_fields(np.array([1.0, 0.0]))
    assert np.allclose(f["u0"], [1.0, 0.0], atol=1e-15)
    assert np.allclose(f["u1"], [-1.0, 0.0], atol=1e-15)


def test_ramp():
    r = np.linspace(-2, 2, 401)
    s = gapx.ramp(r)
    assert np.all(s[r >= 1] == 1.0) and np.all(s[r <= -1] == 0.0)
    assert np.allclose(gapx.ramp(-r), 1 - s, atol=1e-15)
    assert np.all(np.diff(s) >= 0)


def _random_disk(rng, n):
    r = np.sqrt(rng.random(n)) * 0.999 + 1e-3
    t = rng.random(n) * 2 * np.pi
    return np.column_stack([r * np.cos(t), r * np.sin(t)])


def test_psi_on_branch_and_zero_integrand():
    rng = np.random.default_rng(0)
    x = _random_disk(rng, 500)
    assert np.all(gapx.psi(x, gapx.u0(x)) == 1.0)
    assert np.max(np.abs(gapx.L_field(x, gapx.u0(x), gapx.du0(x)))) <= 1e-12
    assert np.max(np.abs(gapx.L_field(x, gapx.u1(x), gapx.du1(x)))) <= 1e-12


def test_delta_nearest_branch():
    rng = np.random.default_rng(1)
    x = _random_disk(rng, 2000)
    y = gapx.u0(x) + rng.normal(scale=0.01, size=x.shape) * np.linalg.norm(x, axis=1, keepdims=True) ** 3
    f = gapx.fields(x, y)
    d0 = np.linalg.norm(y - gapx.u0(x), axis=1)
    d1 = np.linalg.norm(y - gapx.u1(x), axis=1)
    near = np.where((d0 <= d1)[:, None], gapx.u0(x), gapx.u1(x))
    sel = f.in_delta
    assert sel.sum() > 100
    assert np.allclose(f.U[sel], near[sel], atol=1e-15)


def test_invariants_small():
    checks = gapx.check_invariants(5000, seed=3)
    assert all(c["ok"] for c in checks.values()), checks


def test_z_hessian_and_gradient():
    rep = gapx.regularity_probe(100, seed=1)
    assert rep["z_hessian_error"] <= 1e-6
    assert rep["grad_z_error_on_graph"] <= 1e-6
    assert math.isfinite(rep["straddle_max_ratio"])


def test_regularity_growth_is_reported():
    rep = gapx.regularity_probe(100, seed=2)
    assert rep["layer_growth_exponent"] < -3  # documented finding: the ratio blows up near the origin
    assert rep["bounded_near_origin"] is False


def test_relaxed_value():
    assert gapx.relaxed_value(16, 64) <= 1e-8
    assert gapx.relaxed_value(16, 64, shift=0.1) > 1e-3
    with pytest.raises(ValueError):
        gapx.relaxed_value(16, 64, weights=(0.25, 0.25))
    with pytest.raises(ValueError):
        gapx.relaxed_value(8, 32)


def test_alpha0_for_ubar0():
    g = PolarGrid.corona(32, 128, np.pi / 128)
    a = gapx.find_alpha0(gapx.ubar(g.points, 0.0), g)
    assert abs(a.alpha0 - np.pi) <= 1e-5
    assert abs(a.phi) <= a.node_area


def test_alpha0_degenerate():
    g = PolarGrid.corona(16, 64)
    a = gapx.find_alpha0(np.zeros((16 * 64, 2)), g)
    assert a.degenerate and "both sets empty" in a.note


def test_alpha0_equivariance():
    g = PolarGrid.corona(32, 128, np.pi / 128)
    for beta in (np.pi / 2, 1.0, 2.5):
        a = gapx.find_alpha0(gapx.ubar(g.points, beta), g)
        want = (np.pi + beta) % (4 * np.pi)
        assert abs(a.alpha0 - want) <= g.dt + 1e-9, (beta, a.alpha0)


def test_lower_report_cases():
    g = PolarGrid.corona(32, 128, np.pi / 128)
    rep = gapx.classical_lower_report(gapx.ubar(g.points, 0.0), g)
    assert rep.case == "B"
    assert rep.h0_mean >= 1 / 40
    assert rep.derivative_check_fraction >= 0.99
    zero = gapx.classical_lower_report(np.zeros((32 * 128, 2)), g)
    assert zero.case == "A"
    assert zero.caseA_bound == pytest.approx(gapx.CASE_A_BOUND)
    assert zero.objective_on_corona >= zero.caseA_bound


def test_search_small_is_deterministic():
    a = gapx.classical_search(inits=4, steps=20, seed=7, nr=4)
    b = gapx.classical_search(inits=4, steps=20, seed=7, nr=4)
    assert a.best == b.best and np.array_equal(a.minimizer, b.minimizer)
    assert a.monotone
    assert a.values[0] > 0  # the zero start stays positive


def test_gradient_operator_matches_polar_gradient():
    g = PolarGrid.disk(6, 24)
    rng = np.random.default_rng(0)
    h = rng.normal(size=(6 * 24, 2))
    G = gapx._grad_operator(g)
    assert np.allclose(G @ h.ravel(), gapx.polar_gradient(h, g).ravel(), atol=1e-12)

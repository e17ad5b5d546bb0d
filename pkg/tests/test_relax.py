"""Relaxed LP assembly and solution on the one-dimensional builtins."""

import numpy as np
import pytest

from occrelax import (ClassicalViolation, Grid, RelaxationError, TestBasis, assemble, builtin,
                      classical_value, grid_for, integrate, profile_is_constant, solve, solve_relaxation)
from occrelax.core import Domain, ScalarField, VariationalProblem
from occrelax.lp import LinearProgram, EQ, LE

from lp_oracle import oracle


def _const(c):
    return lambda x: np.full(len(x), float(c))


def _fundamental_identities(mu):
    """int z dmu = int y n dmu_b and int n dmu_b = 0 (test functions y and 1)."""
    g = mu.grid
    z_int = integrate(mu, lambda x, y, z: z[:, 0])
    jb, jy = np.nonzero(mu.boundary)
    y_b = float(np.sum(mu.boundary[jb, jy] * g.y[jy, 0] * g.b_normal[jb, 0]))
    one_b = float(np.sum(mu.boundary[jb, jy] * g.b_normal[jb, 0]))
    return abs(z_int - y_b), abs(one_b)


def test_double_well_support_and_value():
    p = builtin("double-well")
    g = grid_for(p)
    lp = assemble(p, g)
    ys = g.y[np.unravel_index(lp.meta["cols"], g.shape)[1], 0]
    assert np.all(ys == 0.0)
    r = solve_relaxation(p, g)
    assert abs(r.value) <= 1e-8
    w = r.measure.weights
    j0 = int(np.flatnonzero(g.y[:, 0] == 0.0)[0])
    zneg, zpos = np.flatnonzero(g.z[:, 0] == -1)[0], np.flatnonzero(g.z[:, 0] == 1)[0]
    assert np.allclose(w[:, j0, zneg], g.cell_volume / 2, atol=1e-9)
    assert np.allclose(w[:, j0, zpos], g.cell_volume / 2, atol=1e-9)
    assert classical_value(p, _const(0.0)) == pytest.approx(1.0, abs=1e-9)


def test_gap_ineq():
    p = builtin("gap-ineq")
    g = grid_for(p)
    lp = assemble(p, g)
    ys = g.y[np.unravel_index(lp.meta["cols"], g.shape)[1], 0]
    assert set(ys.tolist()) == {0.0, 1.0}
    r = solve_relaxation(p, g)
    assert r.value == pytest.approx(0.1, abs=1e-6)
    assert classical_value(p, _const(1.0)) == pytest.approx(1.0, abs=1e-9)
    with pytest.raises(ClassicalViolation):
        classical_value(p, _const(0.0))  # integral constraint fails


def test_two_atom_oracle_for_gap_ineq():
    # weights a0 on y = 0 and a1 on y = 1: min a1 s.t. a0 + a1 = 1, a0 - 9 a1 <= 0
    st, val = oracle([0, 1], [[1, 1], [1, -9]], [EQ, LE], [1, 0], [0, 0], [np.inf, np.inf])
    assert st == "optimal" and val == 0.1
    assert solve(LinearProgram([0, 1], [[1, 1], [1, -9]], [EQ, LE], [1, 0])).objective == pytest.approx(0.1, abs=1e-15)


def test_gap_eq():
    p = builtin("gap-eq")
    r = solve_relaxation(p)
    assert r.value == pytest.approx(0.5, abs=1e-6)
    assert classical_value(p, _const(2.0)) == pytest.approx(2.0, abs=1e-9)
    st, val = oracle([0, 1, 2], [[1, 1, 1], [0, 1, 0.5]], [EQ, EQ], [1, 0.5], [0] * 3, [np.inf] * 3)
    assert st == "optimal" and val == 0.5


def test_convexified_double_well():
    assert abs(solve_relaxation(builtin("double-well-convexified")).value) <= 1e-8


@pytest.mark.parametrize("name", ["double-well", "gap-ineq", "gap-eq", "two-sheet"])
def test_optimum_properties(name):
    p = builtin(name)
    r = solve_relaxation(p)
    assert profile_is_constant(r.measure, 1e-6)
    assert r.measure.mass == pytest.approx(1.0, abs=1e-9)
    assert r.residual <= 1e-9
    assert abs(r.value - r.lp_value) <= 1e-9
    e1, e2 = _fundamental_identities(r.measure)
    assert e1 <= 1e-9 and e2 <= 1e-9


def test_z_refinement_never_increases():
    # z nodes nested: 3 -> 5 -> 9 on [-1, 1]
    p = builtin("gap-eq")
    vals = [solve_relaxation(p, grid_for(p, nz=nz)).value for nz in (3, 5, 9)]
    assert vals[1] <= vals[0] + 1e-9 and vals[2] <= vals[1] + 1e-9


def test_lift_bound():
    """M_r <= classical value + eps_grid, with eps_grid shrinking at second order."""
    dom = Domain("interval", (0.0, 1.0))
    L = ScalarField.from_expr("(z1-1)^2 + (y1-0.5)^2", 1, 1, convex_in_z=True)
    p = VariationalProblem(dom, 1, ((0.0, 1.0),), ((-1.0, 2.0),), L, name="free")
    cands = (lambda x: x[:, 0], lambda x: np.full(len(x), 0.5), lambda x: 0.5 + 0.3 * np.sin(3 * x[:, 0]))
    excess = []
    for N in (8, 16, 32):
        g = Grid.regular(dom, [[0, 1]], [[-1, 2]], N, 2 * N + 1, 13)
        r = solve_relaxation(p, g, TestBasis(g, y_degree=2))
        excess.append(r.value - min(classical_value(p, f, grid=g) for f in cands))
    assert excess[-1] <= 1e-3
    assert excess[1] <= excess[0] / 3 and excess[2] <= excess[1] / 3


def test_empty_support_reported():
    dom = Domain("interval", (0.0, 1.0))
    p = VariationalProblem(dom, 1, ((0.0, 1.0),), ((-1.0, 1.0),), ScalarField.from_expr("y1", 1, 1),
                           F=ScalarField.from_expr("y1 - 7", 1, 1))
    with pytest.raises(RelaxationError) as info:
        solve_relaxation(p, grid_for(p, nx=4, ny=3, nz=3))
    assert info.value.status == "infeasible"


def test_basis_size_mismatch():
    p = builtin("double-well")
    g1, g2 = grid_for(p), grid_for(p, nx=8)
    with pytest.raises(Exception):
        assemble(p, g1, TestBasis(g2))

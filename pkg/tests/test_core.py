"""Domains, fields, builtins, serialisation and the control reduction."""

import json
import math

import numpy as np
import pytest

from occrelax import core
from occrelax.core import (ControlProblem, Domain, ProblemError, ScalarField, boundary_nodes, builtin,
                           problem_from_dict, problem_to_dict, reduce_control, volume)


@pytest.mark.parametrize("dom, want", [
    (Domain("interval", (0, 1)), 1.0),
    (Domain("corona", (0.5, 1.0)), 3 * math.pi / 4),
    (Domain("disk", (1.0,)), math.pi),
    (Domain("box", ((0, 2), (0, 3))), 6.0),
])
def test_volume(dom, want):
    assert volume(dom) == pytest.approx(want, rel=1e-15)


def test_bad_domains():
    for kind, b in [("interval", (1, 0)), ("disk", (0,)), ("corona", (1, 0.5)), ("box", ((0, 0),)),
                    ("sphere", (1,))]:
        with pytest.raises(ProblemError):
            Domain(kind, b)


def test_interval_boundary():
    x, nrm, w = boundary_nodes(Domain("interval", (0, 1)), 2)
    assert x.ravel().tolist() == [0.0, 1.0]
    assert nrm.ravel().tolist() == [-1.0, 1.0]
    assert w.tolist() == [1.0, 1.0]


def test_disk_boundary():
    x, nrm, w = boundary_nodes(Domain("disk", (1.0,)), 4)
    assert len(x) == 4
    assert np.allclose(np.linalg.norm(nrm, axis=1), 1.0, atol=1e-15)
    assert np.allclose(nrm, x)  # radial normals on the unit circle
    assert w.sum() == pytest.approx(2 * math.pi, rel=1e-9)


def test_corona_boundary():
    x, nrm, w = boundary_nodes(Domain("corona", (0.5, 1.0)), 16)
    r = np.linalg.norm(x, axis=1)
    inner = r < 0.75
    # the inner circle's outward normal points to the origin
    assert np.allclose(nrm[inner], -x[inner] / r[inner, None])
    assert w.sum() == pytest.approx(2 * math.pi * 1.5, rel=1e-9)


def test_box_boundary():
    x, nrm, w = boundary_nodes(Domain("box", ((0, 1), (0, 1))), 8)
    assert w.sum() == pytest.approx(4.0, rel=1e-12)
    assert np.allclose(np.linalg.norm(nrm, axis=1), 1.0)
    # corners are never nodes
    corners = np.array([[0, 0], [0, 1], [1, 0], [1, 1]], float)
    assert np.min(np.linalg.norm(x[:, None] - corners[None], axis=2)) > 0
    with pytest.raises(ProblemError):
        boundary_nodes(Domain("disk", (1.0,)), 1)


def test_field_arity_checks():
    dom = Domain("interval", (0, 1))
    L = ScalarField.from_expr("z1^2", 1, 1)
    with pytest.raises(ProblemError):
        core.VariationalProblem(dom, 1, ((0, 1),), ((0, 1), (0, 1)), L)
    with pytest.raises(ProblemError):
        ScalarField.from_expr("z1", 1, 1, boundary=True)
    with pytest.raises(ProblemError):
        core.VariationalProblem(dom, 1, ((0, 1),), ((0, 1),), L, L_b=ScalarField.from_expr("y1", 1, 1))


def test_builtin_double_well():
    p = builtin("double-well")
    assert p.domain == Domain("interval", (0, 1))
    z = np.array([[-1.0], [0.0], [1.0], [0.5]])
    x = np.zeros((4, 1))
    y = np.zeros((4, 1))
    assert p.L(x, y, z).tolist() == [0.0, 1.0, 0.0, 0.5]
    assert p.F(x, np.array([[0.0], [0.3], [0.0], [0.0]]), z).tolist() == [0.0, 0.3, 0.0, 0.0]


def test_builtin_gap_ineq():
    p = builtin("gap-ineq")
    y = np.array([[0.0], [0.5], [1.0]])
    x = np.zeros((3, 1))
    z = np.zeros((3, 1))
    assert p.L(x, y, z).tolist() == [0.0, 0.5, 1.0]
    assert p.F(x, y, z).tolist() == [0.0, 0.25, 0.0]
    (c,) = p.integral
    assert c.rel == "le" and c.target == 0.0
    assert c.H(x, y, z).tolist() == [1.0, -4.0, -9.0]


def test_builtin_gap_eq():
    p = builtin("gap-eq")
    y = np.array([[0.0], [1.0], [2.0]])
    x = np.zeros((3, 1))
    z = np.zeros((3, 1))
    assert p.F(x, y, z).tolist() == [0.0, 0.0, 0.0]
    (c,) = p.integral
    assert c.rel == "eq" and c.target == 0.5
    assert c.H(x, y, z).tolist() == [0.0, 1.0, 0.5]


def test_unknown_builtin():
    with pytest.raises(ProblemError):
        builtin("nope")


@pytest.mark.parametrize("name", sorted(core.BUILTINS))
def test_builtin_round_trip(name):
    p = builtin(name)
    q = problem_from_dict(json.loads(json.dumps(problem_to_dict(p))))
    assert (q.domain, q.m, q.y_box, q.z_box) == (p.domain, p.m, p.y_box, p.z_box)
    rng = np.random.default_rng(7)
    bb = p.domain.bbox()
    x = bb[:, 0] + rng.random((100, p.n)) * (bb[:, 1] - bb[:, 0])
    yb = np.array(p.y_box)
    zb = np.array(p.z_box)
    y = yb[:, 0] + rng.random((100, p.m)) * (yb[:, 1] - yb[:, 0])
    z = zb[:, 0] + rng.random((100, p.m * p.n)) * (zb[:, 1] - zb[:, 0])
    for label in ("L", "F", "G"):
        f, g = getattr(p, label), getattr(q, label)
        assert (f is None) == (g is None)
        if f is not None:
            assert np.array_equal(f(x, y, z), g(x, y, z))
    for cp, cq in zip(p.integral, q.integral):
        assert (cp.rel, cp.target) == (cq.rel, cq.target)
        assert np.array_equal(cp.H(x, y, z), cq.H(x, y, z))


def test_load_problem_reports_offset(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text('{"domain": {"kind": "interval", "bounds": [0, 1]},, }')
    with pytest.raises(ValueError) as info:
        core.load_problem(str(bad))
    assert "char" in str(info.value) or "offset" in str(info.value)


def test_load_problem_schema(tmp_path):
    f = tmp_path / "p.json"
    f.write_text(json.dumps({
        "domain": {"kind": "interval", "bounds": [0, 1]}, "m": 1, "yBox": [[0, 1]], "zBox": [[-1, 1]],
        "L": "y1", "F": "y1*(1-y1)", "integral": [{"H": "1-10*y1", "rel": "le", "target": 0.0}]}))
    p = core.load_problem(str(f))
    assert p.integral[0].H(np.zeros((1, 1)), np.ones((1, 1)), np.zeros((1, 1)))[0] == -9.0
    g = tmp_path / "b.json"
    g.write_text('{"builtin": "gap-eq"}')
    assert core.load_problem(str(g)).name == "gap-eq"


# -- control reduction -------------------------------------------------------------

def _cp(L, F=None, controls=np.linspace(-2, 2, 41)):
    return ControlProblem(Domain("interval", (0, 1)), 1, ((-1, 1),), ((-2, 2),), L, controls, F=F)


def test_reduce_identity_control():
    cp = _cp(lambda x, y, z, u: (u[:, 0] - 1) ** 2 + z[:, 0] ** 2, F=lambda x, y, z, u: z[:, 0] - u[:, 0])
    p = reduce_control(cp)
    z = np.linspace(-2, 2, 41)[:, None]  # every z is a control sample
    x = np.zeros_like(z)
    assert np.allclose(p.L(x, x, z), (z[:, 0] - 1) ** 2 + z[:, 0] ** 2, atol=1e-12)
    assert np.all(p.F(x, x, z) == 0.0)


def test_reduce_unconstrained_minimum():
    p = reduce_control(_cp(lambda x, y, z, u: u[:, 0] ** 2))
    z = np.linspace(-2, 2, 7)[:, None]
    assert np.all(p.L(z * 0, z * 0, z) == 0.0)
    assert p.F is None


def test_reduce_infeasible_gets_penalty():
    cp = _cp(lambda x, y, z, u: u[:, 0] ** 2, F=lambda x, y, z, u: z[:, 0] - u[:, 0],
             controls=np.array([0.0, 1.0]))
    p = reduce_control(cp, penalty=1e6)
    z = np.array([[0.0], [0.5], [1.0]])
    assert p.L(z * 0, z * 0, z).tolist() == [0.0, 1e6, 1.0]
    assert p.F(z * 0, z * 0, z).tolist() == [0.0, 1.0, 0.0]


def test_reduce_is_monotone_in_the_control_grid():
    L = lambda x, y, z, u: (u[:, 0] - z[:, 0]) ** 2 + y[:, 0] * u[:, 0]
    coarse = reduce_control(_cp(L, controls=np.linspace(-2, 2, 5)))
    fine = reduce_control(_cp(L, controls=np.linspace(-2, 2, 9)))  # contains the coarse grid
    rng = np.random.default_rng(0)
    x, y, z = rng.random((100, 1)), rng.uniform(-1, 1, (100, 1)), rng.uniform(-2, 2, (100, 1))
    assert np.all(fine.L(x, y, z) <= coarse.L(x, y, z))


def test_empty_control_grid():
    with pytest.raises(ProblemError):
        _cp(lambda x, y, z, u: u[:, 0], controls=np.array([]))

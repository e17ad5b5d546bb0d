"""Problem model: domains, scalar fields, variational and control problems."""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field, replace
from typing import Callable, Optional, Sequence

import numpy as np

from . import expr as _expr

log = logging.getLogger(__name__)

DEFAULT_PENALTY = 1.0e6

__all__ = [
    "Domain", "ScalarField", "IntegralConstraint", "VariationalProblem", "ControlProblem",
    "volume", "boundary_nodes", "reduce_control", "builtin", "BUILTINS",
    "problem_to_dict", "problem_from_dict", "load_problem", "ProblemError",
]


class ProblemError(ValueError):
    pass


# -- domains -------------------------------------------------------------------

@dataclass(frozen=True)
class Domain:
    """Bounded open region.

    ``bounds`` per kind: interval ``(a, b)``; box ``((lo1, hi1), ..., (lon, hin))``;
    disk ``(radius,)`` centred at the origin; corona ``(r_in, r_out)`` centred at
    the origin.
    """

    kind: str
    bounds: tuple

    def __post_init__(self):
        k = self.kind
        b = self.bounds
        if k == "interval":
            if not (len(b) == 2 and b[0] < b[1]):
                raise ProblemError(f"bad interval {b}")
            object.__setattr__(self, "bounds", (float(b[0]), float(b[1])))
        elif k == "box":
            bb = tuple((float(lo), float(hi)) for lo, hi in b)
            if not bb or any(lo >= hi for lo, hi in bb):
                raise ProblemError(f"bad box {b}")
            object.__setattr__(self, "bounds", bb)
        elif k == "disk":
            if not (len(b) == 1 and b[0] > 0):
                raise ProblemError(f"bad disk {b}")
            object.__setattr__(self, "bounds", (float(b[0]),))
        elif k == "corona":
            if not (len(b) == 2 and 0 < b[0] < b[1]):
                raise ProblemError(f"bad corona {b}")
            object.__setattr__(self, "bounds", (float(b[0]), float(b[1])))
        else:
            raise ProblemError(f"unsupported domain kind {k!r}")

    @property
    def n(self) -> int:
        if self.kind == "interval":
            return 1
        if self.kind == "box":
            return len(self.bounds)
        return 2

    def bbox(self) -> np.ndarray:
        """(n, 2) array of axis bounds."""
        if self.kind == "interval":
            return np.array([self.bounds])
        if self.kind == "box":
            return np.array(self.bounds)
        r = self.bounds[-1]
        return np.array([[-r, r], [-r, r]])

    def contains(self, x: np.ndarray) -> np.ndarray:
        x = np.atleast_2d(x)
        if self.kind in ("interval", "box"):
            bb = self.bbox()
            return np.all((x > bb[:, 0]) & (x < bb[:, 1]), axis=1)
        rad = np.hypot(x[:, 0], x[:, 1])
        if self.kind == "disk":
            return rad < self.bounds[0]
        return (rad > self.bounds[0]) & (rad < self.bounds[1])

    def to_dict(self) -> dict:
        b = self.bounds
        return {"kind": self.kind, "bounds": [list(p) for p in b] if self.kind == "box" else list(b)}

    @classmethod
    def from_dict(cls, d: dict) -> "Domain":
        b = d["bounds"]
        if d["kind"] == "box":
            b = tuple(tuple(p) for p in b)
        return cls(d["kind"], tuple(b))


def volume(domain: Domain) -> float:
    """Lebesgue measure of the domain, in closed form."""
    k, b = domain.kind, domain.bounds
    if k == "interval":
        return b[1] - b[0]
    if k == "box":
        return float(np.prod([hi - lo for lo, hi in b]))
    if k == "disk":
        return math.pi * b[0] ** 2
    return math.pi * (b[1] ** 2 - b[0] ** 2)


def boundary_nodes(domain: Domain, count: int):
    """Quadrature nodes on the boundary.

    Returns ``(points, normals, weights)`` with shapes (N, n), (N, n), (N,).
    ``count`` is the number of nodes per circle (disk, corona) or the number
    of cells per axis used to tile each face of a box; an interval always has
    its two end points.  Box corners and edges are never nodes.
    """
    if count < 2:
        raise ProblemError("count must be >= 2")
    k, b = domain.kind, domain.bounds
    if k == "interval":
        pts = np.array([[b[0]], [b[1]]])
        return pts, np.array([[-1.0], [1.0]]), np.ones(2)
    if k == "box":
        bb = np.array(b)
        return box_face_nodes(bb, [count] * len(b))
    if k == "disk":
        return _circle(b[0], count, outward=True)
    if k == "corona":
        p1, n1, w1 = _circle(b[1], count, outward=True)
        p0, n0, w0 = _circle(b[0], count, outward=False)
        return np.vstack([p1, p0]), np.vstack([n1, n0]), np.concatenate([w1, w0])
    raise ProblemError(f"unsupported domain kind {k!r}")


def _circle(radius: float, count: int, outward: bool):
    th = (np.arange(count) + 0.5) * (2 * np.pi / count)
    nrm = np.column_stack([np.cos(th), np.sin(th)])
    pts = radius * nrm
    if not outward:
        nrm = -nrm
    return pts, nrm, np.full(count, 2 * np.pi * radius / count)


def box_face_nodes(bb: np.ndarray, cells: Sequence[int]):
    """Face-centre nodes on the faces of a box tiled by ``cells`` per axis."""
    n = len(bb)
    centers = [bb[a, 0] + (np.arange(cells[a]) + 0.5) * (bb[a, 1] - bb[a, 0]) / cells[a] for a in range(n)]
    widths = [(bb[a, 1] - bb[a, 0]) / cells[a] for a in range(n)]
    pts, nrms, wts = [], [], []
    for a in range(n):
        others = [c for c in range(n) if c != a]
        if others:
            mesh = np.meshgrid(*[centers[c] for c in others], indexing="ij")
            flat = np.column_stack([g.ravel() for g in mesh])
            w = float(np.prod([widths[c] for c in others]))
        else:
            flat = np.zeros((1, 0))
            w = 1.0
        for side, sgn in ((0, -1.0), (1, 1.0)):
            p = np.empty((len(flat), n))
            p[:, others] = flat
            p[:, a] = bb[a, side]
            nv = np.zeros((len(flat), n))
            nv[:, a] = sgn
            pts.append(p)
            nrms.append(nv)
            wts.append(np.full(len(flat), w))
    return np.vstack(pts), np.vstack(nrms), np.concatenate(wts)


# -- fields --------------------------------------------------------------------

@dataclass(frozen=True)
class ScalarField:
    """A real field on Omega x Y x Z (``boundary=False``) or dOmega x Y.

    ``fn(x, y, z)`` takes arrays of shape (N, n), (N, m), (N, m*n) and returns
    shape (N,); boundary fields ignore ``z``.
    """

    fn: Callable
    n: int
    m: int
    boundary: bool = False
    convex_in_z: bool = False
    continuous: bool = True
    source: Optional[str] = None
    label: str = ""

    @classmethod
    def from_expr(cls, source: str, n: int, m: int, boundary: bool = False,
                  convex_in_z: bool = False, continuous: bool = True, label: str = ""):
        tree = _expr.parse(source, (n, m))
        if boundary and any(v.kind == "z" for v in _expr.variables(tree)):
            raise ProblemError(f"boundary field {source!r} may not depend on z")

        def fn(x, y, z=None, _t=tree):
            x = np.atleast_2d(np.asarray(x, float))
            y = np.atleast_2d(np.asarray(y, float))
            if z is None:
                z = np.zeros((max(len(x), len(y)), m * n))
            return _expr.evaluate_array(_t, x, y, np.atleast_2d(np.asarray(z, float)))

        return cls(fn, n, m, boundary, convex_in_z, continuous, source, label)

    @classmethod
    def constant(cls, value: float, n: int, m: int, boundary: bool = False):
        return cls.from_expr(repr(float(value)), n, m, boundary, convex_in_z=True)

    def __call__(self, x, y, z=None) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, float))
        y = np.atleast_2d(np.asarray(y, float))
        if z is not None:
            z = np.atleast_2d(np.asarray(z, float))
        out = np.asarray(self.fn(x, y, z), dtype=float)
        size = max(len(x), len(y), 0 if z is None else len(z))
        return np.broadcast_to(out, (size,)).copy() if out.ndim == 0 else out


@dataclass(frozen=True)
class IntegralConstraint:
    """``integral of H d(mu)`` compared against ``target`` (``rel`` is 'le' or 'eq')."""

    H: ScalarField
    rel: str = "le"
    target: float = 0.0

    def __post_init__(self):
        if self.rel not in ("le", "eq"):
            raise ProblemError(f"integral relation must be 'le' or 'eq', got {self.rel!r}")


@dataclass(frozen=True)
class VariationalProblem:
    domain: Domain
    m: int
    y_box: tuple
    z_box: tuple
    L: ScalarField
    L_b: Optional[ScalarField] = None
    F: Optional[ScalarField] = None
    G: Optional[ScalarField] = None
    F_b: Optional[ScalarField] = None
    G_b: Optional[ScalarField] = None
    integral: tuple = ()
    name: str = ""
    grid_hint: dict = field(default_factory=dict, compare=False, hash=False)

    def __post_init__(self):
        n = self.domain.n
        if self.m < 1:
            raise ProblemError("codimension m must be >= 1")
        yb = tuple((float(lo), float(hi)) for lo, hi in self.y_box)
        zb = tuple((float(lo), float(hi)) for lo, hi in self.z_box)
        if len(yb) != self.m or any(lo > hi for lo, hi in yb):
            raise ProblemError(f"y_box must have {self.m} nonempty intervals")
        if len(zb) != self.m * n or any(lo > hi for lo, hi in zb):
            raise ProblemError(f"z_box must have m*n = {self.m * n} nonempty intervals")
        object.__setattr__(self, "y_box", yb)
        object.__setattr__(self, "z_box", zb)
        object.__setattr__(self, "integral", tuple(self.integral))
        for label in ("L", "F", "G", "L_b", "F_b", "G_b"):
            f = getattr(self, label)
            if f is None:
                continue
            if (f.n, f.m) != (n, self.m):
                raise ProblemError(f"field {label} has arity {(f.n, f.m)}, expected {(n, self.m)}")
            if f.boundary != label.endswith("_b"):
                raise ProblemError(f"field {label} has the wrong boundary flag")
        for c in self.integral:
            if (c.H.n, c.H.m) != (n, self.m):
                raise ProblemError("integral constraint arity mismatch")

    @property
    def n(self) -> int:
        return self.domain.n


@dataclass(frozen=True)
class ControlProblem:
    """Variational-shaped problem whose fields take an extra control ``u``.

    Bulk fields are called as ``f(x, y, z, u)`` and boundary fields as
    ``f(x, y, u)``; every argument is a 2-D array with matching row count.
    ``controls``/``controls_b`` are (K, p) sample arrays of U and U_boundary.
    """

    domain: Domain
    m: int
    y_box: tuple
    z_box: tuple
    L: Callable
    controls: np.ndarray
    F: Optional[Callable] = None
    G: Optional[Callable] = None
    L_b: Optional[Callable] = None
    F_b: Optional[Callable] = None
    G_b: Optional[Callable] = None
    controls_b: Optional[np.ndarray] = None
    control_box: Optional[tuple] = None
    name: str = ""

    def __post_init__(self):
        u = np.atleast_2d(np.asarray(self.controls, float))
        if u.shape[0] == 1 and np.ndim(self.controls) == 1:
            u = u.T
        if u.size == 0:
            raise ProblemError("control grid is empty")
        object.__setattr__(self, "controls", u)
        ub = self.controls_b
        if ub is not None:
            ub = np.atleast_2d(np.asarray(ub, float))
            if ub.shape[0] == 1 and np.ndim(self.controls_b) == 1:
                ub = ub.T
            if ub.size == 0:
                raise ProblemError("boundary control grid is empty")
            object.__setattr__(self, "controls_b", ub)
        if self.control_box is not None:
            box = np.asarray(self.control_box, float).reshape(-1, 2)
            for grid in (u, ub):
                if grid is not None and np.any((grid < box[:, 0]) | (grid > box[:, 1])):
                    raise ProblemError("control sample outside the declared control set")


def _working_samples(domain: Domain, y_box, z_box, count: int = 257, seed: int = 0):
    rng = np.random.default_rng(seed)
    bb = domain.bbox()
    x = bb[:, 0] + rng.random((count, len(bb))) * (bb[:, 1] - bb[:, 0])
    yb = np.asarray(y_box, float)
    zb = np.asarray(z_box, float)
    y = yb[:, 0] + rng.random((count, len(yb))) * (yb[:, 1] - yb[:, 0])
    z = zb[:, 0] + rng.random((count, len(zb))) * (zb[:, 1] - zb[:, 0])
    return x, y, z


def reduce_control(cp: ControlProblem, tol_f: Optional[float] = None, tol_g: float = 0.0,
                   penalty: float = DEFAULT_PENALTY) -> VariationalProblem:
    """Minimise the control out of a control problem.

    ``Lbar(x,y,z) = min { L(x,y,z,u) : u in grid, |F| <= tol_f, G <= tol_g }``
    and likewise for the boundary cost.  Where no sampled control is feasible
    the reduced cost is ``penalty`` and the reduced feasibility field ``F`` is 1
    (it is 0 on the projected admissible set), so the relaxation's support
    filter removes those points.
    """
    n, m = cp.domain.n, cp.m
    U = cp.controls
    Ub = cp.controls_b if cp.controls_b is not None else U
    if tol_f is None:
        tol_f = 1e-12
        if cp.F is not None:
            x, y, z = _working_samples(cp.domain, cp.y_box, cp.z_box)
            scale = 0.0
            for u in U:
                uu = np.broadcast_to(u, (len(x), len(u)))
                scale = max(scale, float(np.max(np.abs(cp.F(x, y, z, uu)))))
            tol_f = max(1e-6 * scale, 1e-12)

    def bulk(x, y, z):
        x = np.atleast_2d(x)
        y = np.atleast_2d(y)
        z = np.atleast_2d(z)
        N = max(len(x), len(y), len(z))
        best = np.full(N, np.inf)
        for u in U:
            uu = np.broadcast_to(u, (N, len(u)))
            ok = np.ones(N, bool)
            if cp.F is not None:
                ok &= np.abs(cp.F(x, y, z, uu)) <= tol_f
            if cp.G is not None:
                ok &= cp.G(x, y, z, uu) <= tol_g
            val = np.asarray(cp.L(x, y, z, uu), float)
            best = np.where(ok & (val < best), val, best)
        return best

    def boundary(x, y):
        x = np.atleast_2d(x)
        y = np.atleast_2d(y)
        N = max(len(x), len(y))
        best = np.full(N, np.inf)
        for u in Ub:
            uu = np.broadcast_to(u, (N, len(u)))
            ok = np.ones(N, bool)
            if cp.F_b is not None:
                ok &= np.abs(cp.F_b(x, y, uu)) <= tol_f
            if cp.G_b is not None:
                ok &= cp.G_b(x, y, uu) <= tol_g
            val = np.asarray(cp.L_b(x, y, uu), float) if cp.L_b is not None else np.zeros(N)
            best = np.where(ok & (val < best), val, best)
        return best

    def penalised(raw, what):
        def fn(*args):
            v = raw(*args)
            bad = ~np.isfinite(v)
            if bad.any():
                log.info("%s: %d of %d points have no feasible control; using penalty %g",
                         what, int(bad.sum()), v.size, penalty)
            return np.where(bad, penalty, v)
        return fn

    def indicator(raw):
        return lambda *args: np.where(np.isfinite(raw(*args)), 0.0, 1.0)

    L = ScalarField(lambda x, y, z=None: penalised(bulk, "L")(x, y, z), n, m, label="Lbar")
    F = None
    if cp.F is not None or cp.G is not None:
        F = ScalarField(lambda x, y, z=None: indicator(bulk)(x, y, z), n, m, label="feasible")
    has_b = any(f is not None for f in (cp.L_b, cp.F_b, cp.G_b))
    L_b = F_b = None
    if has_b:
        L_b = ScalarField(lambda x, y, z=None: penalised(boundary, "L_b")(x, y), n, m, boundary=True,
                          label="Lbar_b")
        if cp.F_b is not None or cp.G_b is not None:
            F_b = ScalarField(lambda x, y, z=None: indicator(boundary)(x, y), n, m, boundary=True,
                              label="feasible_b")
    return VariationalProblem(cp.domain, m, cp.y_box, cp.z_box, L, L_b=L_b, F=F, F_b=F_b,
                              name=cp.name or "reduced-control")


# -- serialisation ------------------------------------------------------------

_FIELD_KEYS = (("L", "L"), ("L_b", "Lb"), ("F", "F"), ("G", "G"), ("F_b", "Fb"), ("G_b", "Gb"))


def problem_to_dict(p: VariationalProblem) -> dict:
    fields = [getattr(p, a) for a, _ in _FIELD_KEYS] + [c.H for c in p.integral]
    if any(f is not None and f.source is None for f in fields):
        if p.name in BUILTINS:
            return {"builtin": p.name}
        raise ProblemError("problem has code-defined fields and cannot be serialised")
    d = {
        "name": p.name,
        "domain": p.domain.to_dict(),
        "m": p.m,
        "yBox": [list(b) for b in p.y_box],
        "zBox": [list(b) for b in p.z_box],
    }
    for attr, key in _FIELD_KEYS:
        f = getattr(p, attr)
        if f is not None:
            d[key] = f.source
    flags = {key: True for attr, key in _FIELD_KEYS if getattr(p, attr) is not None and getattr(p, attr).convex_in_z}
    if flags:
        d["convexInZ"] = sorted(flags)
    if p.integral:
        d["integral"] = [{"H": c.H.source, "rel": c.rel, "target": c.target} for c in p.integral]
    if p.grid_hint:
        d["grid"] = dict(p.grid_hint)
    return d


def problem_from_dict(d: dict) -> VariationalProblem:
    if "builtin" in d:
        return builtin(d["builtin"])
    try:
        dom = Domain.from_dict(d["domain"])
        n, m = dom.n, int(d.get("m", 1))
        convex = set(d.get("convexInZ", ()))
        kw = {}
        for attr, key in _FIELD_KEYS:
            if key in d and d[key] is not None:
                kw[attr] = ScalarField.from_expr(d[key], n, m, boundary=attr.endswith("_b"),
                                                 convex_in_z=key in convex, label=key)
        if "L" not in kw:
            raise ProblemError("problem needs an 'L' field")
        integral = tuple(
            IntegralConstraint(ScalarField.from_expr(c["H"], n, m, label="H"), c.get("rel", "le"),
                               float(c.get("target", 0.0)))
            for c in d.get("integral", ()))
        return VariationalProblem(dom, m, tuple(map(tuple, d["yBox"])), tuple(map(tuple, d["zBox"])),
                                  integral=integral, name=d.get("name", ""),
                                  grid_hint=dict(d.get("grid", {})), **kw)
    except KeyError as exc:
        raise ProblemError(f"missing key {exc.args[0]!r} in problem description") from None


def load_problem(path: str) -> VariationalProblem:
    with open(path) as fh:
        text = fh.read()
    try:
        d = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ProblemError(f"malformed JSON at line {exc.lineno}, column {exc.colno} (offset {exc.pos}): {exc.msg}") from None
    return problem_from_dict(d)


# -- builtin problems ---------------------------------------------------------

# codim1-demo: L = |z|^2 + (y - g0)^2 on the unit square.  The minimiser is
# y* = a (p(x1) + p(x2)), p(t) = 2t^3 - 3t^2 (zero normal derivative), since
# g0 = y* - lap(y*) makes -lap(y) + y = g0 the Euler-Lagrange equation.
DEMO_AMPLITUDE = 0.1


def demo_minimizer(x: np.ndarray, a: float = DEMO_AMPLITUDE) -> np.ndarray:
    x = np.atleast_2d(x)
    p = 2 * x ** 3 - 3 * x ** 2
    return a * p.sum(axis=1)


def demo_minimizer_gradient(x: np.ndarray, a: float = DEMO_AMPLITUDE) -> np.ndarray:
    x = np.atleast_2d(x)
    return a * (6 * x ** 2 - 6 * x)


def demo_optimal_value(a: float = DEMO_AMPLITUDE) -> float:
    # int |Dy*|^2 = 2 * a^2 * 36/30 ; int (lap y*)^2 = a^2 * 2 * int (12t-6)^2 = 24 a^2
    return a * a * (2.4 + 24.0)


def _double_well():
    n, m = 1, 1
    return VariationalProblem(
        Domain("interval", (0.0, 1.0)), m, ((-1.0, 1.0),), ((-1.0, 1.0),),
        L=ScalarField.from_expr("min(abs(z1-1),abs(z1+1))", n, m, label="L"),
        F=ScalarField.from_expr("y1", n, m, label="F"),
        name="double-well", grid_hint={"nx": 16, "ny": 3, "nz": 3})


def _double_well_convexified():
    n, m = 1, 1
    p = _double_well()
    return replace(p, L=ScalarField.from_expr("max(abs(z1)-1,0)", n, m, convex_in_z=True, label="L"),
                   name="double-well-convexified")


def _gap_ineq():
    n, m = 1, 1
    return VariationalProblem(
        Domain("interval", (0.0, 1.0)), m, ((0.0, 1.0),), ((-1.0, 1.0),),
        L=ScalarField.from_expr("y1", n, m, convex_in_z=True, label="L"),
        F=ScalarField.from_expr("y1*(1-y1)", n, m, label="F"),
        integral=(IntegralConstraint(ScalarField.from_expr("1-10*y1", n, m, label="H"), "le", 0.0),),
        name="gap-ineq", grid_hint={"nx": 16, "ny": 3, "nz": 3})


def _gap_eq():
    n, m = 1, 1
    return VariationalProblem(
        Domain("interval", (0.0, 1.0)), m, ((0.0, 2.0),), ((-1.0, 1.0),),
        L=ScalarField.from_expr("y1", n, m, convex_in_z=True, label="L"),
        F=ScalarField.from_expr("y1*(y1-1)*(y1-2)", n, m, label="F"),
        integral=(IntegralConstraint(ScalarField.from_expr("(7/4)*y1-(3/4)*y1^2", n, m, label="H"),
                                     "eq", 0.5),),
        name="gap-eq", grid_hint={"nx": 16, "ny": 5, "nz": 3})


# two-sheet: support on the union of two crossing lines; see sheets.two_curve_measure
TWO_SHEET_UPPER = "1-x1"
TWO_SHEET_LOWER = "x1"


def _two_sheet():
    n, m = 1, 1
    return VariationalProblem(
        # y spacing h/2: both lines pass through nodes at cell centres and at the ends
        Domain("interval", (0.0, 1.0)), m, ((0.0, 1.0),), ((-1.0, 1.0),),
        L=ScalarField.from_expr("0*y1", n, m, convex_in_z=True, label="L"),
        F=ScalarField.from_expr(f"(y1-({TWO_SHEET_UPPER}))*(y1-({TWO_SHEET_LOWER}))", n, m, label="F"),
        name="two-sheet", grid_hint={"nx": 10, "ny": 21, "nz": 3, "y_degree": 2})


def _codim1_demo():
    n, m = 2, 1
    a = DEMO_AMPLITUDE
    g0 = (f"{a!r}*(2*x1^3-3*x1^2+2*x2^3-3*x2^2-12*x1-12*x2+12)")
    return VariationalProblem(
        Domain("box", ((0.0, 1.0), (0.0, 1.0))), m, ((-0.3, 0.1),), ((-0.2, 0.2), (-0.2, 0.2)),
        L=ScalarField.from_expr(f"z1^2+z2^2+(y1-{g0})^2", n, m, convex_in_z=True, label="L"),
        name="codim1-demo", grid_hint={"nx": 12, "ny": 9, "nz": 5, "y_degree": 2})


def _counterexample_2d():
    from . import gapx
    return gapx.counterexample_problem()


BUILTINS = {
    "double-well": _double_well,
    "double-well-convexified": _double_well_convexified,
    "gap-ineq": _gap_ineq,
    "gap-eq": _gap_eq,
    "two-sheet": _two_sheet,
    "codim1-demo": _codim1_demo,
    "counterexample-2d": _counterexample_2d,
}


def builtin(name: str) -> VariationalProblem:
    try:
        return BUILTINS[name]()
    except KeyError:
        raise ProblemError(f"unknown builtin problem {name!r}; known: {', '.join(sorted(BUILTINS))}") from None

"""Discretised occupation-measure relaxation: LP assembly, solve, classical evaluation."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Optional, Union

import numpy as np
from scipy import sparse

from .basis import TestBasis
from .core import ProblemError, VariationalProblem
from .lp import EQ, LE, LinearProgram, LpSolution, solve
from .measure import GriddedMeasure, Grid, integrate, integrate_boundary, weak_residual

__all__ = [
    "RelaxationError", "ClassicalViolation", "RelaxationResult", "support_masks", "assemble",
    "solve_relaxation", "grid_for", "objective_of", "classical_value",
]

log = logging.getLogger(__name__)


class RelaxationError(RuntimeError):
    """The relaxed LP is infeasible or unbounded, or the support filter left nothing."""

    def __init__(self, message: str, status: str = "infeasible", solution: Optional[LpSolution] = None):
        super().__init__(message)
        self.status = status
        self.solution = solution


class ClassicalViolation(ValueError):
    """A classical candidate violates the pointwise or integral constraints."""

    def __init__(self, violations: list):
        self.violations = violations
        head = "; ".join(violations[:5])
        more = f" (+{len(violations) - 5} more)" if len(violations) > 5 else ""
        super().__init__(f"candidate violates constraints: {head}{more}")


def grid_for(problem: VariationalProblem, nx=None, ny=None, nz=None) -> Grid:
    """Regular grid on the problem's boxes; missing sizes come from the problem's grid hint."""
    hint = problem.grid_hint or {}
    return Grid.regular(problem.domain, problem.y_box, problem.z_box,
                        nx if nx is not None else hint.get("nx", 16),
                        ny if ny is not None else hint.get("ny", 5),
                        nz if nz is not None else hint.get("nz", 5))


def _default_tol(values: np.ndarray) -> float:
    s = float(np.max(np.abs(values))) if values.size else 0.0
    return 1e-6 * s


def support_masks(problem: VariationalProblem, grid: Grid, tol_f: Optional[float] = None,
                  tol_g: float = 0.0):
    """Boolean masks of admissible interior (Nx,Ny,Nz) and boundary (Nb,Ny) nodes.

    ``tol_f`` defaults to 1e-6 times the largest |F| on the grid (per field).
    """
    Nx, Ny, Nz = grid.shape
    xi = np.repeat(grid.x, Ny * Nz, axis=0)
    yi = np.tile(np.repeat(grid.y, Nz, axis=0), (Nx, 1))
    zi = np.tile(grid.z, (Nx * Ny, 1))
    keep = np.ones(Nx * Ny * Nz, bool)
    tols = {}
    if problem.F is not None:
        fv = problem.F(xi, yi, zi)
        t = _default_tol(fv) if tol_f is None else tol_f
        tols["F"] = t
        keep &= np.abs(fv) <= t
    if problem.G is not None:
        keep &= problem.G(xi, yi, zi) <= tol_g
    xb = np.repeat(grid.b_x, Ny, axis=0)
    yb = np.tile(grid.y, (grid.nb, 1))
    bkeep = np.ones(grid.nb * Ny, bool)
    if problem.F_b is not None:
        fv = problem.F_b(xb, yb)
        t = _default_tol(fv) if tol_f is None else tol_f
        tols["F_b"] = t
        bkeep &= np.abs(fv) <= t
    if problem.G_b is not None:
        bkeep &= problem.G_b(xb, yb) <= tol_g
    return keep.reshape(Nx, Ny, Nz), bkeep.reshape(grid.nb, Ny), tols


def _node_arrays(grid: Grid, flat: np.ndarray):
    Nx, Ny, Nz = grid.shape
    i, rem = np.divmod(flat, Ny * Nz)
    j, k = np.divmod(rem, Nz)
    return grid.x[i], grid.y[j], grid.z[k]


def assemble(problem: VariationalProblem, grid: Grid, basis: Optional[TestBasis] = None,
             tol_f: Optional[float] = None, tol_g: float = 0.0) -> LinearProgram:
    """Build the relaxed LP.

    Variables are the retained interior weights followed by the retained
    boundary weights; ``lp.meta`` records which grid nodes they are.
    Rows: mass, the basis identities (exact equalities), then one row per
    integral constraint.
    """
    if grid.m != problem.m or grid.n != problem.n:
        raise ProblemError("grid dimensions do not match the problem")
    basis = basis if basis is not None else TestBasis(grid)
    if basis.grid is not grid:
        raise ProblemError("basis was built for a different grid")
    keep, bkeep, tols = support_masks(problem, grid, tol_f, tol_g)
    cols = np.flatnonzero(keep.ravel())
    bcols = np.flatnonzero(bkeep.ravel())
    if cols.size == 0:
        raise RelaxationError("support filter removed every interior node", "infeasible")
    nint = int(np.prod(grid.shape))
    A_basis = basis.matrix()[:, np.concatenate([cols, nint + bcols])]
    x, y, z = _node_arrays(grid, cols)
    Ny = len(grid.y)
    jb, jy = np.divmod(bcols, Ny)
    xb, yb = grid.b_x[jb], grid.y[jy]
    nv = len(cols) + len(bcols)
    rows = [sparse.csr_matrix(np.concatenate([np.ones(len(cols)), np.zeros(len(bcols))])[None, :])]
    rel = [EQ]
    rhs = [float(grid.cell_volume.sum())]
    A_basis = A_basis.tocsr()
    A_basis.eliminate_zeros()
    nonempty = np.diff(A_basis.indptr) > 0
    rows.append(A_basis[nonempty])
    rel += [EQ] * int(nonempty.sum())
    rhs += [0.0] * int(nonempty.sum())
    for c in problem.integral:
        hv = np.concatenate([c.H(x, y, z), np.zeros(len(bcols))])
        rows.append(sparse.csr_matrix(hv[None, :]))
        rel.append(LE if c.rel == "le" else EQ)
        rhs.append(float(c.target))
    cost = np.asarray(problem.L(x, y, z), float)
    bcost = np.asarray(problem.L_b(xb, yb), float) if problem.L_b is not None else np.zeros(len(bcols))
    if not (np.all(np.isfinite(cost)) and np.all(np.isfinite(bcost))):
        raise ProblemError("objective field is not finite on the retained grid nodes")
    A = sparse.vstack(rows, format="csr")
    lp = LinearProgram(np.concatenate([cost, bcost]), A, np.array(rel), np.array(rhs))
    lp.meta = {"cols": cols, "bcols": bcols, "tolerances": tols, "n_basis_rows": int(nonempty.sum())}
    assert lp.n_vars == nv
    return lp


@dataclass(eq=False)
class RelaxationResult:
    value: float
    measure: GriddedMeasure
    solution: LpSolution
    active_support: int
    active_boundary: int
    basis: TestBasis
    lp_value: float
    residual: float = 0.0
    tolerances: dict = field(default_factory=dict)

    def summary(self) -> dict:
        lp = self.solution.summary()
        return {"M_r": self.value, "lp_objective": self.lp_value, "active_support": self.active_support,
                "active_boundary": self.active_boundary, "weak_residual": self.residual,
                "mass": self.measure.mass, "lp": lp, "tolerances": self.tolerances}


def objective_of(problem: VariationalProblem, mu: GriddedMeasure) -> float:
    v = integrate(mu, problem.L)
    if problem.L_b is not None:
        v += integrate_boundary(mu, lambda x, y: problem.L_b(x, y))
    return v


def solve_relaxation(problem: VariationalProblem, grid: Optional[Grid] = None,
                     basis: Optional[TestBasis] = None, *, tol_f: Optional[float] = None,
                     tol_g: float = 0.0, method: str = "auto", degree: int = 4) -> RelaxationResult:
    """Solve the relaxed problem on ``grid`` (default: the problem's hinted grid)."""
    grid = grid if grid is not None else grid_for(problem)
    if basis is None:
        # quadratic y tests keep exact lifts of affine pieces feasible
        yd = (problem.grid_hint or {}).get("y_degree", 4)
        basis = TestBasis(grid, y_degree=yd, boundary_degree=degree)
    lp = assemble(problem, grid, basis, tol_f, tol_g)
    sol = solve(lp, method=method)
    if sol.status != "optimal":
        raise RelaxationError(f"relaxed LP is {sol.status}", sol.status, sol)
    cols, bcols = lp.meta["cols"], lp.meta["bcols"]
    w = np.zeros(int(np.prod(grid.shape)))
    w[cols] = sol.x[:len(cols)]
    b = np.zeros(grid.nb * len(grid.y))
    b[bcols] = sol.x[len(cols):]
    mu = GriddedMeasure(grid, w, b)
    value = objective_of(problem, mu)
    res = RelaxationResult(value, mu, sol, len(cols), len(bcols), basis, sol.objective,
                           weak_residual(mu, basis), lp.meta["tolerances"])
    log.info("relaxation %s: M_r=%.12g (%d interior, %d boundary columns, %d rows, %s)",
             problem.name, value, len(cols), len(bcols), lp.n_rows, sol.method)
    return res


# -- classical competitors -------------------------------------------------------

def classical_value(problem: VariationalProblem,
                    candidate: Union[Callable, np.ndarray],
                    grid: Optional[Grid] = None, dy: Optional[Callable] = None,
                    tol: float = 1e-8, step: float = 1e-6, boundary_values: Optional[np.ndarray] = None) -> float:
    """Cell-centre quadrature of ``int L(x, y, Dy) dx + int L_b(x, y) dsigma``.

    ``candidate`` is a callable on (N, n) points, or an array of values at the
    grid's x nodes (shape (Nx,) or (Nx, m)), in which case the gradient is a
    central difference over the tensor grid and boundary values are
    extrapolated from the nearest node unless ``boundary_values`` is given.
    Raises :class:`ClassicalViolation` when F, G or an integral constraint fails.
    """
    grid = grid if grid is not None else grid_for(problem, ny=2, nz=2)
    n, m = grid.n, problem.m
    if callable(candidate):
        yv = np.asarray(candidate(grid.x), float).reshape(len(grid.x), m)
        if dy is not None:
            zv = np.asarray(dy(grid.x), float).reshape(len(grid.x), m * n)
        else:
            zv = np.empty((len(grid.x), m, n))
            for l in range(n):
                e = np.zeros(n)
                e[l] = step
                zv[:, :, l] = (np.asarray(candidate(grid.x + e), float).reshape(-1, m)
                               - np.asarray(candidate(grid.x - e), float).reshape(-1, m)) / (2 * step)
            zv = zv.reshape(len(grid.x), m * n)
        ybv = np.asarray(candidate(grid.b_x), float).reshape(grid.nb, m)
    else:
        yv, zv = _grid_gradient(grid, np.asarray(candidate, float).reshape(len(grid.x), m))
        if boundary_values is not None:
            ybv = np.asarray(boundary_values, float).reshape(grid.nb, m)
        else:
            near = np.argmin(((grid.b_x[:, None, :] - grid.x[None]) ** 2).sum(-1), axis=1)
            ybv = yv[near]
    bad = []
    for label in ("F", "G"):
        f = getattr(problem, label)
        if f is None:
            continue
        v = f(grid.x, yv, zv)
        mask = np.abs(v) > tol if label == "F" else v > tol
        for i in np.flatnonzero(mask)[:10]:
            bad.append(f"{label}={v[i]:.3g} at x={grid.x[i].tolist()}")
        if mask.sum() > 10:
            bad.append(f"{label}: {int(mask.sum())} nodes in total")
    for label in ("F_b", "G_b"):
        f = getattr(problem, label)
        if f is None:
            continue
        v = f(grid.b_x, ybv)
        mask = np.abs(v) > tol if label == "F_b" else v > tol
        for i in np.flatnonzero(mask)[:10]:
            bad.append(f"{label}={v[i]:.3g} at boundary x={grid.b_x[i].tolist()}")
    for c in problem.integral:
        val = float(np.dot(c.H(grid.x, yv, zv), grid.cell_volume))
        if (c.rel == "le" and val > c.target + tol) or (c.rel == "eq" and abs(val - c.target) > tol):
            bad.append(f"integral constraint {c.rel} {c.target}: value {val:.12g}")
    if bad:
        raise ClassicalViolation(bad)
    total = float(np.dot(problem.L(grid.x, yv, zv), grid.cell_volume))
    if problem.L_b is not None:
        total += float(np.dot(problem.L_b(grid.b_x, ybv), grid.b_weight))
    return total


def _grid_gradient(grid: Grid, yv: np.ndarray):
    """Central differences (one-sided at the edges) on the tensor grid of cell centres."""
    counts = grid.x_counts()
    if len(grid.x) != int(np.prod(counts)):
        raise ValueError("array candidates need an unmasked tensor grid; pass a callable instead")
    n, m = grid.n, yv.shape[1]
    h = grid.x_spacing()
    full = yv.reshape(*counts, m)
    z = np.empty((len(yv), m, n))
    for l in range(n):
        if counts[l] < 2:
            z[:, :, l] = 0.0
            continue
        g = np.gradient(full, h[l], axis=l)
        z[:, :, l] = g.reshape(-1, m)
    return yv, z.reshape(len(yv), m * n)

"""Codimension-one sheet decomposition of relaxed measures and classical recovery."""

from __future__ import annotations

import io
import csv
import json
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .core import ProblemError, VariationalProblem
from .measure import GriddedMeasure, Grid, centroid, _atomic_write, _fmt

__all__ = [
    "DensityField", "SheetFamily", "RecoveryReport", "density", "extract_sheets",
    "check_superposition", "check_boundary_superposition", "sheet_values", "recover_classical",
    "two_curve_measure", "write_sheets_csv", "write_density_csv", "AFFINE_TESTS",
]

LEVEL_TOL = 1e-12
MAX_EXACT_LEVELS = 64  # plateau count up to which a measure is treated as atomic
DEFAULT_K = 16


@dataclass(frozen=True, eq=False)
class DensityField:
    """rho(x_i, y_j) = -(mass of the column up to and including y_j) / (column mass)."""

    grid: Grid
    rho: np.ndarray  # (Nx, Ny)
    column_mass: np.ndarray  # (Nx,)
    extended: tuple = ()  # columns with no mass, filled from the nearest massive column
    c: float = 1.0


@dataclass(frozen=True, eq=False)
class SheetFamily:
    levels: np.ndarray  # (K,) in [-1, 0]
    nu: np.ndarray  # (K,) weights, summing to 1
    index: np.ndarray  # (K, Nx) y-node index of each sheet
    values: np.ndarray  # (K, Nx, m)
    derivative: np.ndarray  # (K, Nx, n*m) centroid derivative
    fd_derivative: np.ndarray  # (K, Nx, n*m) finite-difference cross-check (NaN if unavailable)
    boundary_index: np.ndarray  # (K, Nb)
    boundary_values: np.ndarray  # (K, Nb, m)

    @property
    def K(self) -> int:
        return len(self.levels)


def _codim_one(grid: Grid):
    if grid.m != 1:
        raise ProblemError(f"sheet decomposition needs codimension 1, got m={grid.m}")


def density(mu: GriddedMeasure) -> DensityField:
    g = mu.grid
    _codim_one(g)
    marg = mu.weights.sum(axis=2)
    tot = marg.sum(axis=1)
    rho = np.zeros_like(marg)
    good = tot > 0
    rho[good] = -np.cumsum(marg[good], axis=1) / tot[good, None]
    # the last node carries the remaining mass exactly
    rho[good, -1] = -1.0
    rho = np.clip(rho, -1.0, 0.0)
    empty = np.flatnonzero(~good)
    if empty.size:
        if not good.any():
            raise ValueError("measure has no mass")
        full = np.flatnonzero(good)
        for i in empty:
            near = full[np.argmin(np.sum((g.x[full] - g.x[i]) ** 2, axis=1))]
            rho[i] = rho[near]
    # enforce monotonicity against rounding in the cumulative sum
    rho = np.minimum.accumulate(rho, axis=1)
    return DensityField(g, rho, tot, tuple(int(i) for i in empty))


def _quantile_index(rho: np.ndarray, r: float) -> np.ndarray:
    """Smallest j with rho[:, j] <= r (per row)."""
    hit = rho <= r + LEVEL_TOL
    return np.argmax(hit, axis=1)


def _boundary_density(mu: GriddedMeasure, rho: DensityField) -> np.ndarray:
    g = mu.grid
    b = mu.boundary
    tot = b.sum(axis=1)
    out = np.empty_like(b)
    for k in range(g.nb):
        if tot[k] > 0:
            out[k] = np.minimum.accumulate(np.clip(-np.cumsum(b[k]) / tot[k], -1.0, 0.0))
            out[k, -1] = -1.0
        else:
            near = int(np.argmin(np.sum((g.x - g.b_x[k]) ** 2, axis=1)))
            out[k] = rho.rho[near]
    return out


def _distinct(values: np.ndarray, tol: float = LEVEL_TOL) -> np.ndarray:
    """Sorted distinct values, merging runs closer than ``tol``."""
    v = np.sort(values.ravel())
    if v.size == 0:
        return v
    keep = np.r_[True, np.diff(v) > tol]
    return v[keep]


def _levels(rho: np.ndarray, K: Optional[int]):
    if K is None:
        br = _distinct(np.concatenate([rho.ravel(), [0.0, -1.0]]))[::-1]  # 0 ... -1
        if len(br) - 1 <= MAX_EXACT_LEVELS:
            upper, lower = br[:-1], br[1:]
            return 0.5 * (upper + lower), upper - lower
        K = DEFAULT_K
    if K < 1:
        raise ValueError("K must be >= 1")
    k = np.arange(1, K + 1)
    return -(k - 0.5) / K, np.full(K, 1.0 / K)


def extract_sheets(rho: DensityField, mu: GriddedMeasure, K: Optional[int] = None) -> SheetFamily:
    """Quantile sheets phi_r(x) = min{y_j : rho(x, y_j) <= r}.

    ``K=None`` uses every distinct level of rho when there are at most
    ``MAX_EXACT_LEVELS`` plateaus, so atomic measures split exactly: level
    intervals are the gaps between consecutive values of rho and the weights
    are the interval lengths.  With more plateaus, or an explicit K, the
    levels are -(k - 1/2)/K with weight 1/K each (K defaults to 16).
    """
    g = mu.grid
    _codim_one(g)
    levels, nu = _levels(rho.rho, K)
    cf = centroid(mu)
    Nx = len(g.x)
    idx = np.stack([_quantile_index(rho.rho, r) for r in levels])
    values = g.y[idx]  # (K, Nx, 1)
    deriv = cf.Z[np.arange(Nx)[None, :], idx]  # (K, Nx, n)
    missing = np.isnan(deriv)
    if missing.any():
        # extended (massless) columns: borrow the derivative of the nearest column
        for i in rho.extended:
            d2 = np.sum((g.x - g.x[i]) ** 2, axis=1)
            d2[list(rho.extended)] = np.inf
            deriv[:, i] = deriv[:, int(np.argmin(d2))]
        deriv = np.where(np.isnan(deriv), 0.0, deriv)
    fd = _fd_derivative(g, values)
    brho = _boundary_density(mu, rho)
    bidx = np.stack([_quantile_index(brho, r) for r in levels]) if g.nb else np.zeros((len(levels), 0), int)
    return SheetFamily(levels, nu, idx, values, deriv, fd, bidx, g.y[bidx])


def _fd_derivative(g: Grid, values: np.ndarray) -> np.ndarray:
    counts = g.x_counts()
    K = values.shape[0]
    out = np.full((K, len(g.x), g.n), np.nan)
    if len(g.x) != int(np.prod(counts)):
        return out
    h = g.x_spacing()
    for k in range(K):
        full = values[k, :, 0].reshape(counts)
        for a in range(g.n):
            if counts[a] > 1:
                out[k, :, a] = np.gradient(full, h[a], axis=a).ravel()
    return out


# z-affine test fields used by default in superposition checks
AFFINE_TESTS = {
    "1": lambda x, y, z: np.ones(len(x)),
    "y": lambda x, y, z: y[:, 0],
    "z": lambda x, y, z: z.sum(axis=1),
    "yz": lambda x, y, z: y[:, 0] * z.sum(axis=1),
}


def check_superposition(mu: GriddedMeasure, fam: SheetFamily,
                        tests: Optional[dict] = None) -> dict:
    """Per test field: |int f dmu - sum_k nu_k sum_i f(x_i, phi_k, Dphi_k) vol_i|."""
    tests = tests if tests is not None else AFFINE_TESTS
    g = mu.grid
    (i, j, k), x, y, z, w = mu.support()
    out = {}
    for name, f in tests.items():
        lhs = float(np.dot(f(x, y, z), w)) if len(w) else 0.0
        rhs = 0.0
        for s in range(fam.K):
            v = f(g.x, fam.values[s], fam.derivative[s])
            rhs += fam.nu[s] * float(np.dot(v, g.cell_volume))
        out[name] = abs(lhs - rhs)
    return out


def check_boundary_superposition(mu: GriddedMeasure, fam: SheetFamily,
                                 tests: Optional[dict] = None) -> dict:
    tests = tests if tests is not None else {"1": lambda x, y: np.ones(len(x)), "y": lambda x, y: y[:, 0]}
    g = mu.grid
    jb, jy = np.nonzero(mu.boundary > 0)
    out = {}
    for name, f in tests.items():
        lhs = float(np.dot(f(g.b_x[jb], g.y[jy]), mu.boundary[jb, jy])) if len(jb) else 0.0
        rhs = sum(fam.nu[s] * float(np.dot(f(g.b_x, fam.boundary_values[s]), g.b_weight)) for s in range(fam.K))
        out[name] = abs(lhs - rhs)
    return out


def sheet_values(problem: VariationalProblem, grid: Grid, fam: SheetFamily, use_fd: bool = False) -> np.ndarray:
    """Objective of every sheet: cell quadrature of L plus boundary quadrature of L_b."""
    out = np.empty(fam.K)
    for s in range(fam.K):
        dz = fam.fd_derivative[s] if use_fd else fam.derivative[s]
        v = float(np.dot(problem.L(grid.x, fam.values[s], dz), grid.cell_volume))
        if problem.L_b is not None and grid.nb:
            v += float(np.dot(problem.L_b(grid.b_x, fam.boundary_values[s]), grid.b_weight))
        out[s] = v
    return out


@dataclass(eq=False)
class RecoveryReport:
    best: int
    best_value: float
    relaxed_value: float
    values: np.ndarray
    nu: np.ndarray
    average: float
    feasible: np.ndarray
    violations: dict
    fd_value: float
    family: SheetFamily
    no_gap_asserted: bool
    notes: list = field(default_factory=list)

    @property
    def best_sheet(self) -> np.ndarray:
        return self.family.values[self.best, :, 0]

    @property
    def relative_gap(self) -> float:
        """|best - M_r| / |M_r| (absolute difference when M_r is 0)."""
        d = abs(self.best_value - self.relaxed_value)
        return d / abs(self.relaxed_value) if self.relaxed_value != 0 else d

    def summary(self) -> dict:
        return {
            "best_sheet": int(self.best), "best_level": float(self.family.levels[self.best]),
            "best_value": self.best_value, "M_r": self.relaxed_value, "average_value": self.average,
            "relative_gap": self.relative_gap, "fd_value": self.fd_value, "sheets": int(self.family.K),
            "feasible_sheets": int(self.feasible.sum()), "no_gap_asserted": self.no_gap_asserted,
            "notes": list(self.notes),
        }


def recover_classical(problem: VariationalProblem, result, K: Optional[int] = None,
                      tol: float = 1e-8) -> RecoveryReport:
    """Decompose the relaxed optimum into sheets and keep the cheapest feasible one.

    The no-gap chain (best <= average <= M_r) is asserted only when L is flagged
    convex in z and there is no pointwise constraint, because the fibre set of a
    support constraint need not be convex.
    """
    if problem.m != 1:
        raise ProblemError(f"recover_classical needs codimension 1, got m={problem.m}")
    mu = result.measure
    g = mu.grid
    rho = density(mu)
    fam = extract_sheets(rho, mu, K)
    vals = sheet_values(problem, g, fam)
    feas = np.ones(fam.K, bool)
    viol = {}
    for s in range(fam.K):
        bad = []
        for label in ("F", "G"):
            f = getattr(problem, label)
            if f is None:
                continue
            v = f(g.x, fam.values[s], fam.derivative[s])
            worst = float(np.max(np.abs(v))) if label == "F" else float(np.max(v))
            if worst > tol:
                bad.append((label, worst))
        for label in ("F_b", "G_b"):
            f = getattr(problem, label)
            if f is None or not g.nb:
                continue
            v = f(g.b_x, fam.boundary_values[s])
            worst = float(np.max(np.abs(v))) if label == "F_b" else float(np.max(v))
            if worst > tol:
                bad.append((label, worst))
        for c in problem.integral:
            val = float(np.dot(c.H(g.x, fam.values[s], fam.derivative[s]), g.cell_volume))
            if (c.rel == "le" and val > c.target + tol) or (c.rel == "eq" and abs(val - c.target) > tol):
                bad.append(("integral", val))
        if bad:
            feas[s] = False
            viol[s] = bad
    if not feas.any():
        raise ProblemError("no sheet satisfies the constraints: " + json.dumps(
            {str(k): v for k, v in list(viol.items())[:5]}))
    cand = np.flatnonzero(feas)
    best = int(cand[np.argmin(vals[cand])])
    fd_vals = sheet_values(problem, g, fam, use_fd=True)
    convex = bool(problem.L.convex_in_z) and problem.F is None and problem.G is None
    notes = []
    if not convex:
        notes.append("L is not flagged convex in z or a pointwise constraint is present; "
                     "no-gap chain not asserted")
    return RecoveryReport(best, float(vals[best]), float(result.value), vals, fam.nu,
                          float(np.dot(fam.nu, vals)), feas, viol, float(fd_vals[best]), fam, convex, notes)


# -- the two-curve example ------------------------------------------------------

def two_curve_measure(N: int = 10, upper: Callable = None, lower: Callable = None,
                      weights=(2.0 / 3.0, 1.0 / 3.0)) -> GriddedMeasure:
    """Mixture ``weights[0]`` * lift(1 - x) + ``weights[1]`` * lift(x) on (0, 1).

    The grids are aligned so that both lines pass exactly through nodes: x and
    y nodes at the cell centres (N even, so the curves never share a node) and
    z nodes {-1, 0, 1}.  Custom curves must map cell centres to cell centres.
    """
    from .core import Domain

    if N % 2:
        raise ValueError("N must be even so the curves never share a grid node")
    dom = Domain("interval", (0.0, 1.0))
    centres = (np.arange(N) + 0.5) / N
    grid = Grid.with_axes(dom, N, [centres], [np.array([-1.0, 0.0, 1.0])])
    from .measure import lift_values

    gam = upper or (lambda x: 1.0 - x[:, 0])
    eta = lower or (lambda x: x[:, 0])
    mus = []
    for f, wt in zip((gam, eta), weights):
        yv = f(grid.x)
        zv = (f(grid.x + 1e-3) - f(grid.x - 1e-3)) / 2e-3
        yb = f(grid.b_x)
        yb = np.clip(yb, centres[0], centres[-1])  # boundary values snap to the end nodes
        mus.append(lift_values(grid, yv, np.rint(zv), yb).scaled(wt))
    return mus[0] + mus[1]


# -- CSV export -----------------------------------------------------------------

def write_sheets_csv(fam: SheetFamily, grid: Grid, path: str) -> None:
    n = grid.n
    buf = io.StringIO()
    wr = csv.writer(buf, lineterminator="\n")
    wr.writerow(["r", "nu"] + [f"x{a + 1}" for a in range(n)] + ["phi"] + [f"dphi{a + 1}" for a in range(n)]
                + [f"fd_dphi{a + 1}" for a in range(n)])
    for s in range(fam.K):
        for i in range(len(grid.x)):
            wr.writerow([_fmt(fam.levels[s]), _fmt(fam.nu[s])] + [_fmt(v) for v in grid.x[i]]
                        + [_fmt(fam.values[s, i, 0])] + [_fmt(v) for v in fam.derivative[s, i]]
                        + [_fmt(v) for v in fam.fd_derivative[s, i]])
    _atomic_write(path, buf.getvalue())


def write_density_csv(rho: DensityField, path: str) -> None:
    g = rho.grid
    buf = io.StringIO()
    wr = csv.writer(buf, lineterminator="\n")
    wr.writerow([f"x{a + 1}" for a in range(g.n)] + ["y", "rho"])
    for i in range(len(g.x)):
        for j in range(len(g.y)):
            wr.writerow([_fmt(v) for v in g.x[i]] + [_fmt(g.y[j, 0]), _fmt(rho.rho[i, j])])
    _atomic_write(path, buf.getvalue())

"""Discrete measures on tensor grids over Omega x Y x Z."""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from .core import Domain, box_face_nodes, boundary_nodes, volume

__all__ = [
    "Grid", "GriddedMeasure", "CentroidField",
    "occupation_lift", "lift_values", "weak_residual", "projection_profile",
    "centroid", "concentrate", "integrate", "write_measure_csv", "read_measure_csv",
]

MASS_TOL = 1e-9


def _axis(lo: float, hi: float, count: int) -> np.ndarray:
    if lo == hi or count == 1:
        return np.array([0.5 * (lo + hi)])
    return np.linspace(lo, hi, count)


def _as_counts(v, k: int) -> tuple:
    if np.isscalar(v):
        return (int(v),) * k
    v = tuple(int(c) for c in v)
    if len(v) != k:
        raise ValueError(f"expected {k} counts, got {len(v)}")
    return v


@dataclass(frozen=True, eq=False)
class Grid:
    """Cell-centred x nodes (masked to the domain), node grids for y and z.

    ``x_index[i]`` is the tensor multi-index of retained x node ``i``.  The z
    vector of a node is the row-major flattening of the m x n Jacobian
    (entry ``i*n + l`` is dy_i/dx_l).
    """

    domain: Domain
    x_axes: tuple
    x_index: np.ndarray
    x: np.ndarray
    cell_volume: np.ndarray
    y_axes: tuple
    y: np.ndarray
    z_axes: tuple
    z: np.ndarray
    b_x: np.ndarray
    b_normal: np.ndarray
    b_weight: np.ndarray

    @classmethod
    def regular(cls, domain: Domain, y_box, z_box, nx=16, ny=3, nz=3, nb: Optional[int] = None) -> "Grid":
        n = domain.n
        y_box = np.asarray(y_box, float).reshape(-1, 2)
        z_box = np.asarray(z_box, float).reshape(-1, 2)
        nxs = _as_counts(nx, n)
        bb = domain.bbox()
        x_axes = tuple(bb[a, 0] + (np.arange(nxs[a]) + 0.5) * (bb[a, 1] - bb[a, 0]) / nxs[a] for a in range(n))
        mesh = np.meshgrid(*x_axes, indexing="ij")
        xfull = np.column_stack([g.ravel() for g in mesh])
        idx = np.column_stack([g.ravel() for g in np.meshgrid(*[np.arange(c) for c in nxs], indexing="ij")])
        keep = domain.contains(xfull)
        x = xfull[keep]
        x_index = idx[keep]
        widths = np.array([(bb[a, 1] - bb[a, 0]) / nxs[a] for a in range(n)])
        cell = np.full(len(x), float(np.prod(widths)))
        if domain.kind not in ("interval", "box"):
            cell *= volume(domain) / cell.sum()
        y_axes = tuple(_axis(lo, hi, c) for (lo, hi), c in zip(y_box, _as_counts(ny, len(y_box))))
        z_axes = tuple(_axis(lo, hi, c) for (lo, hi), c in zip(z_box, _as_counts(nz, len(z_box))))
        y = _tensor(y_axes)
        z = _tensor(z_axes)
        if domain.kind in ("interval", "box"):
            bx, bn, bw = box_face_nodes(bb, nxs) if domain.kind == "box" else boundary_nodes(domain, 2)
        else:
            bx, bn, bw = boundary_nodes(domain, nb or 4 * max(nxs))
        return cls(domain, x_axes, x_index, x, cell, y_axes, y, z_axes, z, bx, bn, bw)

    @classmethod
    def with_axes(cls, domain: Domain, nx, y_axes: Sequence, z_axes: Sequence) -> "Grid":
        """Like :meth:`regular` but with explicit (strictly increasing) y and z node arrays."""
        y_axes = [np.asarray(a, float) for a in y_axes]
        z_axes = [np.asarray(a, float) for a in z_axes]
        for a in list(y_axes) + list(z_axes):
            if a.ndim != 1 or a.size == 0 or np.any(np.diff(a) <= 0):
                raise ValueError("node arrays must be nonempty and strictly increasing")
        g = cls.regular(domain, [[a[0], a[-1]] for a in y_axes], [[a[0], a[-1]] for a in z_axes], nx, 1, 1)
        return cls(domain, g.x_axes, g.x_index, g.x, g.cell_volume, tuple(y_axes), _tensor(y_axes),
                   tuple(z_axes), _tensor(z_axes), g.b_x, g.b_normal, g.b_weight)

    @property
    def n(self) -> int:
        return self.x.shape[1]

    @property
    def m(self) -> int:
        return self.y.shape[1]

    @property
    def shape(self) -> tuple:
        return (len(self.x), len(self.y), len(self.z))

    @property
    def nb(self) -> int:
        return len(self.b_x)

    def x_counts(self) -> tuple:
        return tuple(len(a) for a in self.x_axes)

    def x_spacing(self) -> np.ndarray:
        bb = self.domain.bbox()
        return np.array([(bb[a, 1] - bb[a, 0]) / len(self.x_axes[a]) for a in range(self.n)])

    def nearest_y(self, vals: np.ndarray) -> np.ndarray:
        return _nearest_tensor(self.y_axes, np.atleast_2d(vals))

    def nearest_z(self, vals: np.ndarray) -> np.ndarray:
        return _nearest_tensor(self.z_axes, np.atleast_2d(vals))

    def to_dict(self) -> dict:
        return {
            "domain": self.domain.to_dict(),
            "nx": list(self.x_counts()),
            "y_axes": [a.tolist() for a in self.y_axes],
            "z_axes": [a.tolist() for a in self.z_axes],
            "nb": self.nb if self.domain.kind in ("disk", "corona") else None,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Grid":
        dom = Domain.from_dict(d["domain"])
        g = cls.with_axes(dom, d["nx"], d["y_axes"], d["z_axes"])
        if d.get("nb") and dom.kind in ("disk", "corona"):
            bx, bn, bw = boundary_nodes(dom, int(d["nb"]) if dom.kind == "disk" else int(d["nb"]) // 2)
            g = cls(dom, g.x_axes, g.x_index, g.x, g.cell_volume, g.y_axes, g.y, g.z_axes, g.z, bx, bn, bw)
        return g


def _tensor(axes) -> np.ndarray:
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.column_stack([g.ravel() for g in mesh])


def _nearest_tensor(axes, vals: np.ndarray) -> np.ndarray:
    """Flat tensor index of the nearest node, per row of ``vals``; -1 if outside the box."""
    flat = np.zeros(len(vals), dtype=np.int64)
    bad = np.zeros(len(vals), bool)
    for a, ax in enumerate(axes):
        v = vals[:, a]
        if len(ax) == 1:
            k = np.zeros(len(v), dtype=np.int64)
            bad |= np.abs(v - ax[0]) > 1e-9 * max(1.0, abs(ax[0]))
        else:
            half = 0.5 * min(ax[1] - ax[0], ax[-1] - ax[-2])
            bad |= (v < ax[0] - half) | (v > ax[-1] + half) | ~np.isfinite(v)
            mids = 0.5 * (ax[1:] + ax[:-1])
            k = np.searchsorted(mids, v, side="left")
            k = np.clip(k, 0, len(ax) - 1)
        flat = flat * len(ax) + k
    flat[bad] = -1
    return flat


@dataclass(frozen=True, eq=False)
class GriddedMeasure:
    """Nonnegative weights on grid nodes (interior) and on (boundary node, y node) pairs.

    Weights carry mass directly, not density.
    """

    grid: Grid
    weights: np.ndarray
    boundary: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.weights, float).reshape(self.grid.shape)
        b = np.asarray(self.boundary, float).reshape(self.grid.nb, len(self.grid.y))
        for arr, what in ((w, "interior"), (b, "boundary")):
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"{what} weights must be finite")
            if arr.size and arr.min() < -1e-9:
                raise ValueError(f"{what} weights must be nonnegative (min {arr.min():.3g})")
        w = np.clip(w, 0.0, None)
        b = np.clip(b, 0.0, None)
        w.setflags(write=False)
        b.setflags(write=False)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "boundary", b)

    @classmethod
    def zeros(cls, grid: Grid) -> "GriddedMeasure":
        return cls(grid, np.zeros(grid.shape), np.zeros((grid.nb, len(grid.y))))

    @property
    def mass(self) -> float:
        return float(self.weights.sum())

    def mass_defect(self) -> float:
        """|total mass - |Omega|| relative to |Omega|."""
        vol = float(self.grid.cell_volume.sum())
        return abs(self.mass - vol) / vol

    def is_normalized(self, tol: float = MASS_TOL) -> bool:
        return self.mass_defect() <= tol

    def normalized(self) -> "GriddedMeasure":
        s = float(self.grid.cell_volume.sum()) / self.mass
        return GriddedMeasure(self.grid, self.weights * s, self.boundary * s)

    def xy_marginal(self) -> np.ndarray:
        return self.weights.sum(axis=2)

    def __add__(self, other: "GriddedMeasure") -> "GriddedMeasure":
        return GriddedMeasure(self.grid, self.weights + other.weights, self.boundary + other.boundary)

    def scaled(self, c: float) -> "GriddedMeasure":
        return GriddedMeasure(self.grid, self.weights * c, self.boundary * c)

    def support(self):
        """Indices and coordinates of interior nodes with positive weight."""
        i, j, k = np.nonzero(self.weights > 0)
        g = self.grid
        return (i, j, k), g.x[i], g.y[j], g.z[k], self.weights[i, j, k]


def integrate(mu: GriddedMeasure, f: Callable) -> float:
    """Integral of ``f(x, y, z)`` against the interior part of ``mu``."""
    _, x, y, z, w = mu.support()
    if len(w) == 0:
        return 0.0
    return float(np.dot(np.asarray(f(x, y, z), float), w))


def integrate_boundary(mu: GriddedMeasure, f: Callable) -> float:
    jb, jy = np.nonzero(mu.boundary > 0)
    if len(jb) == 0:
        return 0.0
    g = mu.grid
    return float(np.dot(np.asarray(f(g.b_x[jb], g.y[jy]), float), mu.boundary[jb, jy]))


def _fd_jacobian(y: Callable, x: np.ndarray, m: int, step: float) -> np.ndarray:
    n = x.shape[1]
    jac = np.empty((len(x), m, n))
    for l in range(n):
        e = np.zeros(n)
        e[l] = step
        jac[:, :, l] = (np.asarray(y(x + e)).reshape(len(x), m) - np.asarray(y(x - e)).reshape(len(x), m)) / (2 * step)
    return jac.reshape(len(x), m * n)


def lift_values(grid: Grid, yvals: np.ndarray, zvals: np.ndarray,
                yb: Optional[np.ndarray] = None) -> GriddedMeasure:
    """Occupation measure of a grid function given by its node values and gradients."""
    yvals = np.asarray(yvals, float).reshape(len(grid.x), grid.m)
    zvals = np.asarray(zvals, float).reshape(len(grid.x), grid.m * grid.n)
    jy = grid.nearest_y(yvals)
    jz = grid.nearest_z(zvals)
    if np.any(jy < 0) or np.any(jz < 0):
        raise ValueError("function values or gradients fall outside the grid's y/z boxes")
    w = np.zeros(grid.shape)
    np.add.at(w, (np.arange(len(grid.x)), jy, jz), grid.cell_volume)
    b = np.zeros((grid.nb, len(grid.y)))
    if yb is not None:
        yb = np.asarray(yb, float).reshape(grid.nb, grid.m)
        jb = grid.nearest_y(yb)
        if np.any(jb < 0):
            raise ValueError("boundary values fall outside the grid's y box")
        np.add.at(b, (np.arange(grid.nb), jb), grid.b_weight)
    return GriddedMeasure(grid, w, b)


def occupation_lift(y: Callable, grid: Grid, dy: Optional[Callable] = None,
                    step: float = 1e-6) -> GriddedMeasure:
    """Push the cell volumes forward by ``x -> (x, y(x), Dy(x))``, snapping to nearest nodes.

    ``y`` maps (N, n) points to (N, m) values (or (N,) when m == 1).  Without
    ``dy`` the gradient is a central difference of ``y`` with the given step.
    """
    m = grid.m
    yv = np.asarray(y(grid.x), float).reshape(len(grid.x), m)
    if dy is not None:
        zv = np.asarray(dy(grid.x), float).reshape(len(grid.x), m * grid.n)
    else:
        zv = _fd_jacobian(y, grid.x, m, step)
    yb = np.asarray(y(grid.b_x), float).reshape(grid.nb, m)
    return lift_values(grid, yv, zv, yb)


def weak_residual(mu: GriddedMeasure, basis) -> float:
    """Largest violation of the integration-by-parts identities over the basis rows."""
    A = basis.matrix()
    vec = np.concatenate([mu.weights.ravel(), mu.boundary.ravel()])
    r = A @ vec
    return float(np.max(np.abs(r))) if r.size else 0.0


def projection_profile(mu: GriddedMeasure) -> np.ndarray:
    """Mass per x cell divided by the cell volume."""
    return mu.weights.sum(axis=(1, 2)) / mu.grid.cell_volume


def profile_is_constant(mu: GriddedMeasure, tol: float = 1e-6) -> bool:
    p = projection_profile(mu)
    return bool(np.ptp(p) <= tol * max(1.0, float(np.max(np.abs(p)))))


@dataclass(frozen=True, eq=False)
class CentroidField:
    """(x, y) marginal and the conditional z mean of each fibre with positive mass."""

    grid: Grid
    marginal: np.ndarray  # (Nx, Ny)
    Z: np.ndarray  # (Nx, Ny, m*n); NaN where the fibre is empty

    @property
    def defined(self) -> np.ndarray:
        return self.marginal > 0


def centroid(mu: GriddedMeasure) -> CentroidField:
    w = mu.weights
    marg = w.sum(axis=2)
    num = np.einsum("ijk,kc->ijc", w, mu.grid.z)
    Z = np.full(num.shape, np.nan)
    pos = marg > 0
    Z[pos] = num[pos] / marg[pos][:, None]
    return CentroidField(mu.grid, marg, Z)


def concentrate(mu: GriddedMeasure, cf: Optional[CentroidField] = None) -> GriddedMeasure:
    """Move each fibre's mass to the z node nearest its centroid; empty fibres are skipped."""
    cf = cf if cf is not None else centroid(mu)
    g = mu.grid
    i, j = np.nonzero(cf.defined)
    k = g.nearest_z(cf.Z[i, j])
    w = np.zeros(g.shape)
    w[i, j, k] = cf.marginal[i, j]
    return GriddedMeasure(g, w, mu.boundary)


def snapping_bound(grid: Grid) -> float:
    """Half the largest z spacing; nearest-node moves are at most this per component."""
    h = [0.5 * float(np.max(np.diff(a))) for a in grid.z_axes if len(a) > 1]
    return max(h) if h else 0.0


# -- CSV -----------------------------------------------------------------------

def _fmt(v: float) -> str:
    return format(float(v), ".17g")


def _names(grid: Grid):
    n, m = grid.n, grid.m
    xs = [f"x{a + 1}" for a in range(n)]
    ys = [f"y{k + 1}" for k in range(m)]
    zs = [f"z{k + 1}{l + 1}" if max(n, m) < 10 else f"z{k + 1}_{l + 1}" for k in range(m) for l in range(n)]
    return xs, ys, zs


def write_measure_csv(mu: GriddedMeasure, path: str, boundary_path: Optional[str] = None,
                      include_zeros: bool = False) -> None:
    """Interior CSV ``x.., y.., z.., weight`` and boundary CSV ``x.., n.., y.., weight``.

    The first line of each file is a ``#`` comment holding the grid as JSON.
    """
    g = mu.grid
    xs, ys, zs = _names(g)
    header = "# grid: " + json.dumps(g.to_dict(), separators=(",", ":"))
    buf = io.StringIO()
    buf.write(header + "\n")
    wr = csv.writer(buf, lineterminator="\n")
    wr.writerow(xs + ys + zs + ["weight"])
    if include_zeros:
        ii, jj, kk = np.meshgrid(*[np.arange(s) for s in g.shape], indexing="ij")
        ii, jj, kk = ii.ravel(), jj.ravel(), kk.ravel()
    else:
        ii, jj, kk = np.nonzero(mu.weights > 0)
    for i, j, k in zip(ii, jj, kk):
        wr.writerow([_fmt(v) for v in (*g.x[i], *g.y[j], *g.z[k], mu.weights[i, j, k])])
    _atomic_write(path, buf.getvalue())
    if boundary_path is not None:
        buf = io.StringIO()
        buf.write(header + "\n")
        wr = csv.writer(buf, lineterminator="\n")
        wr.writerow(xs + [f"n{a + 1}" for a in range(g.n)] + ys + ["weight"])
        jb, jy = np.nonzero(mu.boundary > 0) if not include_zeros else np.nonzero(np.ones_like(mu.boundary))
        for b, j in zip(jb, jy):
            wr.writerow([_fmt(v) for v in (*g.b_x[b], *g.b_normal[b], *g.y[j], mu.boundary[b, j])])
        _atomic_write(boundary_path, buf.getvalue())


def _atomic_write(path: str, text: str) -> None:
    import os
    import tempfile
    d = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-", suffix=os.path.basename(path))
    with os.fdopen(fd, "w") as fh:
        fh.write(text)
    os.replace(tmp, path)


def _read_csv(path: str):
    with open(path) as fh:
        first = fh.readline()
        if not first.startswith("# grid:"):
            raise ValueError(f"{path}: missing '# grid:' header line")
        grid = Grid.from_dict(json.loads(first[len("# grid:"):]))
        rows = list(csv.reader(fh))
    return grid, rows[0], [list(map(float, r)) for r in rows[1:] if r]


def read_measure_csv(path: str, boundary_path: Optional[str] = None) -> GriddedMeasure:
    grid, header, rows = _read_csv(path)
    n, m = grid.n, grid.m
    w = np.zeros(grid.shape)
    if rows:
        arr = np.array(rows)
        i = _match_rows(grid.x, arr[:, :n])
        j = grid.nearest_y(arr[:, n:n + m])
        k = grid.nearest_z(arr[:, n + m:n + m + m * n])
        if np.any(j < 0) or np.any(k < 0):
            raise ValueError(f"{path}: node outside the grid")
        np.add.at(w, (i, j, k), arr[:, -1])
    b = np.zeros((grid.nb, len(grid.y)))
    if boundary_path is not None:
        g2, _, brows = _read_csv(boundary_path)
        if brows:
            arr = np.array(brows)
            ib = _match_rows(grid.b_x, arr[:, :n], normals=(grid.b_normal, arr[:, n:2 * n]))
            jy = grid.nearest_y(arr[:, 2 * n:2 * n + m])
            np.add.at(b, (ib, jy), arr[:, -1])
    return GriddedMeasure(grid, w, b)


def _match_rows(nodes: np.ndarray, pts: np.ndarray, normals=None) -> np.ndarray:
    out = np.empty(len(pts), dtype=np.int64)
    for r, p in enumerate(pts):
        d = np.max(np.abs(nodes - p), axis=1)
        if normals is not None:
            d = d + np.max(np.abs(normals[0] - normals[1][r]), axis=1)
        i = int(np.argmin(d))
        if d[i] > 1e-9 * (1 + np.max(np.abs(p))):
            raise ValueError(f"point {p} is not a grid node")
        out[r] = i
    return out

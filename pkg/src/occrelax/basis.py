"""Test functions for the discrete integration-by-parts identities.

Interior rows pair a piecewise-linear x function,
which ramps across one cell face in direction l and is a node indicator in
the other directions, with a Legendre polynomial in y; the identity is taken
only in direction l.  Derivatives are therefore evaluated at cell centres,
where the function is smooth, and a measure coming from a smooth function is
consistent with every row up to O(h).  Boundary rows use scaled monomials in
(x, y) of bounded total degree, which tie the interior to the boundary part.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np
from numpy.polynomial import legendre as _leg
from scipy import sparse

from .measure import Grid

__all__ = ["TestBasis", "multi_indices"]


def multi_indices(dim: int, degree: int) -> List[Tuple[int, ...]]:
    """All exponent tuples of length ``dim`` with total degree <= ``degree``, graded order."""
    out = []
    for d in range(degree + 1):
        for c in itertools.product(range(d + 1), repeat=dim):
            if sum(c) == d:
                out.append(c)
    return out


def _affine(axes) -> Tuple[np.ndarray, np.ndarray]:
    """Centre and half-width of each axis (half-width 1 for degenerate axes)."""
    c = np.array([0.5 * (a[0] + a[-1]) for a in axes])
    s = np.array([0.5 * (a[-1] - a[0]) if a[-1] > a[0] else 1.0 for a in axes])
    return c, s


def _legendre_table(t: np.ndarray, degree: int) -> Tuple[np.ndarray, np.ndarray]:
    """Values and derivatives of P_0..P_degree at ``t``, each of shape (degree+1, len(t))."""
    v = np.empty((degree + 1, len(t)))
    d = np.empty_like(v)
    for k in range(degree + 1):
        coef = np.zeros(k + 1)
        coef[k] = 1.0
        v[k] = _leg.legval(t, coef)
        d[k] = _leg.legval(t, _leg.legder(coef))
    return v, d


def _avg_pow(c, hh, p: int):
    """Mean of t**p over [c - hh, c + hh] (the point value where hh == 0)."""
    c = np.asarray(c, float)
    hh = np.broadcast_to(np.asarray(hh, float), c.shape)
    out = c ** p
    w = hh > 0
    if np.any(w):
        out = out.copy()
        out[w] = ((c[w] + hh[w]) ** (p + 1) - (c[w] - hh[w]) ** (p + 1)) / ((p + 1) * 2 * hh[w])
    return out


def _avg_dpow(c, hh, p: int):
    """Mean of d/dt t**p over [c - hh, c + hh]."""
    if p == 0:
        return np.zeros_like(np.asarray(c, float))
    c = np.asarray(c, float)
    hh = np.broadcast_to(np.asarray(hh, float), c.shape)
    out = p * c ** (p - 1)
    w = hh > 0
    if np.any(w):
        out = out.copy()
        out[w] = ((c[w] + hh[w]) ** p - (c[w] - hh[w]) ** p) / (2 * hh[w])
    return out


@dataclass
class TestBasis:
    """Row generator for the weak boundary identities on a :class:`Grid`.

    Columns are ordered as the flattened interior weights (Nx, Ny, Nz)
    followed by the flattened boundary weights (Nb, Ny).
    """

    __test__ = False  # keeps pytest from collecting the class by name

    grid: Grid
    y_degree: int = 4
    boundary_degree: int = 4
    boundary_family: Optional[str] = None
    rows: list = field(default_factory=list, init=False, repr=False)
    _A: Optional[sparse.csr_matrix] = field(default=None, init=False, repr=False)

    def __post_init__(self):
        if self.y_degree < 0 or self.boundary_degree < 0:
            raise ValueError("degrees must be nonnegative")
        boxlike = self.grid.domain.kind in ("interval", "box")
        if self.boundary_family is None:
            self.boundary_family = "faces" if boxlike else "monomials"
        if self.boundary_family not in ("faces", "monomials"):
            raise ValueError(f"unknown boundary family {self.boundary_family!r}")
        if self.boundary_family == "faces" and not boxlike:
            raise ValueError("boundary face rows need an interval or box domain")

    @property
    def n_columns(self) -> int:
        g = self.grid
        return int(np.prod(g.shape)) + g.nb * len(g.y)

    def matrix(self) -> sparse.csr_matrix:
        if self._A is None:
            self._A = self._build()
        return self._A

    # -- construction ---------------------------------------------------------

    def _y_functions(self):
        """Values and y gradients of the y family at the y nodes.

        Returns (V, D): V is (nf, Ny), D is (nf, Ny, m).
        """
        g = self.grid
        live = [a for a in range(g.m) if len(g.y_axes[a]) > 1]
        c, s = _affine(g.y_axes)
        tables = []
        for a in range(g.m):
            t = (g.y[:, a] - c[a]) / s[a]
            deg = min(self.y_degree, len(g.y_axes[a]) - 1)
            tables.append(_legendre_table(t, deg) + (deg,))
        V, D = [], []
        for mi in multi_indices(len(live), self.y_degree):
            exps = [0] * g.m
            ok = True
            for a, e in zip(live, mi):
                if e > tables[a][2]:
                    ok = False
                exps[a] = e
            if not ok:
                continue
            val = np.ones(len(g.y))
            parts = [tables[a][0][exps[a]] for a in range(g.m)]
            for p in parts:
                val = val * p
            grad = np.empty((len(g.y), g.m))
            for a in range(g.m):
                q = np.ones(len(g.y))
                for b in range(g.m):
                    q = q * (tables[b][1][exps[b]] / s[b] if b == a else parts[b])
                grad[:, a] = q
            V.append(val)
            D.append(grad)
        return np.array(V), np.array(D)

    def _build(self) -> sparse.csr_matrix:
        g = self.grid
        n, m = g.n, g.m
        Nx, Ny, Nz = g.shape
        zt = g.z.reshape(Nz, m, n)
        V, D = self._y_functions()
        nf = len(V)
        # zterm[f, l, j, k] = sum_i dB_f/dy_i (y_j) z_{k, i, l}
        zterm = np.einsum("fji,kil->fljk", D, zt)
        h = g.x_spacing()
        counts = g.x_counts()
        lookup = -np.ones(counts, dtype=np.int64)
        lookup[tuple(g.x_index.T)] = np.arange(Nx)
        rows_i, cols_i, vals_i = [], [], []
        self.rows = []
        r = 0
        jk = np.arange(Ny * Nz)
        for l in range(n):
            lo_idx = g.x_index.copy()
            for i_lo in range(Nx):
                idx = lo_idx[i_lo].copy()
                if idx[l] + 1 >= counts[l]:
                    continue
                idx[l] += 1
                i_hi = lookup[tuple(idx)]
                if i_hi < 0:
                    continue
                for f in range(nf):
                    # phi = ramp across the face (value 1/2 at both centres) x node indicator x B_f
                    blk_lo = (V[f][:, None] / h[l] + 0.5 * zterm[f, l]).ravel()
                    blk_hi = (-V[f][:, None] / h[l] + 0.5 * zterm[f, l]).ravel()
                    for i_node, blk in ((i_lo, blk_lo), (i_hi, blk_hi)):
                        nz = blk != 0
                        rows_i.append(np.full(int(nz.sum()), r))
                        cols_i.append(i_node * Ny * Nz + jk[nz])
                        vals_i.append(blk[nz])
                    self.rows.append(("face", l, int(i_lo), f))
                    r += 1
        nint = Nx * Ny * Nz
        if self.boundary_family == "faces":
            # half ramps from each boundary node to the first interior face
            lo_corner = g.domain.bbox()[:, 0]
            for b in range(g.nb):
                a = int(np.argmax(np.abs(g.b_normal[b])))
                nrm = float(g.b_normal[b, a])
                idx = np.rint((g.b_x[b] - lo_corner) / h - 0.5).astype(np.int64)
                idx[a] = 0 if nrm < 0 else counts[a] - 1
                i_cell = lookup[tuple(idx)]
                for f in range(nf):
                    blk = (nrm * V[f][:, None] / h[a] + 0.5 * zterm[f, a]).ravel()
                    nz = blk != 0
                    bblk = -nrm * V[f]
                    bnz = bblk != 0
                    rows_i += [np.full(int(nz.sum()), r), np.full(int(bnz.sum()), r)]
                    cols_i += [i_cell * Ny * Nz + jk[nz], nint + b * Ny + np.flatnonzero(bnz)]
                    vals_i += [blk[nz], bblk[bnz]]
                    self.rows.append(("bface", a, int(b), f))
                    r += 1
        # boundary monomials; x factors are cell (face) averages so that the
        # x-only identities hold exactly for the uniform marginal on box cells
        bx, bn = g.b_x, g.b_normal
        xc, xs = _affine([np.array([lo, hi]) for lo, hi in g.domain.bbox()])
        yc, ys = _affine(g.y_axes)
        xt = (g.x - xc) / xs
        half = 0.5 * h / xs
        xbt = (bx - xc) / xs
        bhalf = np.where(np.abs(bn) > 0.5, 0.0, half[None, :]) if g.domain.kind in ("interval", "box") \
            else np.zeros_like(bx)
        yt = (g.y - yc) / ys
        live_y = [a for a in range(m) if len(g.y_axes[a]) > 1]
        boxlike = g.domain.kind in ("interval", "box")
        dense_rows = []
        families = multi_indices(n + len(live_y), self.boundary_degree) if self.boundary_family == "monomials" else []
        for exps in families:
            px = np.array(exps[:n])
            py = np.zeros(m, dtype=int)
            py[live_y] = exps[n:]
            if np.any(py > np.array([len(a) - 1 for a in g.y_axes])):
                continue
            if not boxlike and not py.any():
                continue
            avg = np.stack([_avg_pow(xt[:, a], half[a], px[a]) for a in range(n)], axis=1)
            mx = np.prod(avg, axis=1)  # (Nx,)
            my = np.prod(yt ** py, axis=1)  # (Ny,)
            dmy = np.empty((Ny, m))
            for a in range(m):
                if py[a] == 0:
                    dmy[:, a] = 0.0
                else:
                    e = py.copy()
                    e[a] -= 1
                    dmy[:, a] = py[a] / ys[a] * np.prod(yt ** e, axis=1)
            zdy = np.einsum("ja,kal->ljk", dmy, zt)  # (n, Ny, Nz)
            mbx = np.prod(np.stack([_avg_pow(xbt[:, a], bhalf[:, a], px[a]) for a in range(n)], axis=1), axis=1)
            for l in range(n):
                others = np.prod(np.delete(avg, l, axis=1), axis=1) if n > 1 else np.ones(Nx)
                dx = others * _avg_dpow(xt[:, l], half[l], px[l]) / xs[l]
                interior = dx[:, None, None] * my[None, :, None] + mx[:, None, None] * zdy[l][None]
                interior = np.broadcast_to(interior, (Nx, Ny, Nz)).ravel()
                bnd = -(mbx * bn[:, l])[:, None] * my[None, :]
                dense_rows.append(np.concatenate([interior, bnd.ravel()]))
                self.rows.append(("mono", l, tuple(int(e) for e in exps), -1))
        ncol = nint + g.nb * Ny
        A_face = sparse.csr_matrix(
            (np.concatenate(vals_i) if vals_i else np.zeros(0),
             (np.concatenate(rows_i) if rows_i else np.zeros(0, int),
              np.concatenate(cols_i) if cols_i else np.zeros(0, int))),
            shape=(r, ncol))
        if dense_rows:
            Dm = np.array(dense_rows)
            Dm[np.abs(Dm) < 1e-15] = 0.0
            A_mono = sparse.csr_matrix(Dm)
            return sparse.vstack([A_face, A_mono], format="csr")
        return A_face

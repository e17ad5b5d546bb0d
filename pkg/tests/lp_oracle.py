"""Brute-force LP oracle by vertex enumeration (small dense instances only)."""

import itertools

import numpy as np

LE, EQ, GE = -1, 0, 1


def _rows(A, rel, b, lb, ub):
    """All constraints as (a, beta, kind) with kind in {'le', 'eq'} and a @ x (kind) beta."""
    n = A.shape[1]
    rows = []
    for a, r, v in zip(A, rel, b):
        if r == LE:
            rows.append((a, v, "le"))
        elif r == GE:
            rows.append((-a, -v, "le"))
        else:
            rows.append((a, v, "eq"))
    for j in range(n):
        e = np.zeros(n)
        e[j] = 1.0
        if np.isfinite(lb[j]):
            rows.append((-e, -lb[j], "le"))
        if np.isfinite(ub[j]):
            rows.append((e, ub[j], "le"))
    return rows


def _vertices(rows, n, tol=1e-9):
    M = np.array([r[0] for r in rows])
    beta = np.array([r[1] for r in rows])
    eq = np.array([r[2] == "eq" for r in rows])
    combos = np.array(list(itertools.combinations(range(len(rows)), n)))
    if combos.size == 0:
        return np.zeros((0, n))
    mats = M[combos]
    dets = np.linalg.det(mats)
    good = np.abs(dets) > 1e-10
    if not good.any():
        return np.zeros((0, n))
    xs = np.linalg.solve(mats[good], beta[combos[good]][..., None])[..., 0]
    s = xs @ M.T - beta
    scale = 1.0 + np.abs(beta)
    ok = np.all(np.where(eq, np.abs(s) <= tol * scale, s <= tol * scale), axis=1)
    return xs[ok]


def oracle(c, A, rel, b, lb, ub):
    """Return ('optimal', value) / ('infeasible', None) / ('unbounded', None).

    Needs a pointed feasible set (every variable bounded on at least one side).
    """
    c = np.asarray(c, float)
    A = np.asarray(A, float).reshape(-1, len(c))
    n = len(c)
    rows = _rows(A, rel, b, lb, ub)
    verts = _vertices(rows, n)
    if len(verts) == 0:
        return "infeasible", None
    # recession cone {d : homogeneous rows}, normalised by sum |d| along signed bounds
    cone = [(a, 0.0, k) for a, _, k in rows]
    sign = np.where(np.isfinite(lb), 1.0, -1.0)
    cone.append((sign, 1.0, "eq"))
    rays = _vertices(cone, n)
    if len(rays) and np.min(rays @ c) < -1e-9:
        return "unbounded", None
    return "optimal", float(np.min(verts @ c))

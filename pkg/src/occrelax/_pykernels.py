"""Pure numpy versions of the simplex kernels (same semantics as the compiled ones)."""

import numpy as np


def bland_price(indptr, indices, data, cost, y, eligible, tol):
    """First eligible column whose reduced cost is below -tol, or -1."""
    col = np.repeat(np.arange(len(cost)), np.diff(indptr))
    col_sum = np.bincount(col, weights=data * y[indices], minlength=len(cost))
    d = cost - col_sum
    hit = np.flatnonzero(eligible.astype(bool) & (d < -tol))
    return int(hit[0]) if hit.size else -1


def ratio_test(xb, d, basis, tol):
    """Leaving row for direction d; ties broken by the smallest basic variable index."""
    pos = np.flatnonzero(d > tol)
    if pos.size == 0:
        return -1
    t = xb[pos] / d[pos]
    theta = t.min()
    cand = pos[t <= theta + 1e-12 * (1.0 + abs(theta))]
    return int(cand[np.argmin(basis[cand])])


def eta_update(binv, d, r):
    """In-place product-form update of the basis inverse after pivoting on row r."""
    binv[r] /= d[r]
    f = d.copy()
    f[r] = 0.0
    binv -= np.outer(f, binv[r])


def dantzig_price(indptr, indices, data, cost, y, eligible, tol):
    """Eligible column with the most negative reduced cost (< -tol); lowest index on ties."""
    col = np.repeat(np.arange(len(cost)), np.diff(indptr))
    d = cost - np.bincount(col, weights=data * y[indices], minlength=len(cost))
    d = np.where(eligible.astype(bool), d, np.inf)
    j = int(np.argmin(d)) if len(d) else -1
    return j if j >= 0 and d[j] < -tol else -1


def harris_ratio(xb, d, basis, ptol, ftol):
    """Two-pass ratio test: bound the step with relaxed feasibility, then take the largest pivot."""
    pos = np.flatnonzero(d > ptol)
    if pos.size == 0:
        return -1
    tmax = np.min((xb[pos] + ftol) / d[pos])
    cand = pos[xb[pos] / d[pos] <= tmax]
    top = cand[d[cand] == d[cand].max()]
    return int(top[np.argmin(basis[top])])

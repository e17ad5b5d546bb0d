# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled simplex kernels: Bland pricing, ratio test, eta update."""

import numpy as np
cimport numpy as cnp
from libc.math cimport fabs

cnp.import_array()


def bland_price(const cnp.int64_t[::1] indptr, const cnp.int64_t[::1] indices,
                const double[::1] data, const double[::1] cost, const double[::1] y,
                const cnp.uint8_t[::1] eligible, double tol):
    """First eligible column whose reduced cost is below -tol, or -1."""
    cdef Py_ssize_t j, p, ncol = cost.shape[0]
    cdef double d
    for j in range(ncol):
        if not eligible[j]:
            continue
        d = cost[j]
        for p in range(indptr[j], indptr[j + 1]):
            d -= y[indices[p]] * data[p]
        if d < -tol:
            return j
    return -1


def ratio_test(const double[::1] xb, const double[::1] d, const cnp.int64_t[::1] basis,
               double tol):
    """Leaving row for direction d; ties broken by the smallest basic variable index."""
    cdef Py_ssize_t i, m = xb.shape[0], best = -1
    cdef double theta = 0.0, t, slack
    for i in range(m):
        if d[i] > tol:
            t = xb[i] / d[i]
            if best < 0 or t < theta:
                theta = t
                best = i
    if best < 0:
        return -1
    slack = 1e-12 * (1.0 + fabs(theta))
    best = -1
    for i in range(m):
        if d[i] > tol:
            t = xb[i] / d[i]
            if t <= theta + slack and (best < 0 or basis[i] < basis[best]):
                best = i
    return best


def eta_update(double[:, ::1] binv, const double[::1] d, Py_ssize_t r):
    """In-place product-form update of the basis inverse after pivoting on row r."""
    cdef Py_ssize_t i, k, m = binv.shape[0]
    cdef double piv = d[r], f
    for k in range(m):
        binv[r, k] /= piv
    for i in range(m):
        if i == r:
            continue
        f = d[i]
        if f != 0.0:
            for k in range(m):
                binv[i, k] -= f * binv[r, k]


def dantzig_price(const cnp.int64_t[::1] indptr, const cnp.int64_t[::1] indices,
                  const double[::1] data, const double[::1] cost, const double[::1] y,
                  const cnp.uint8_t[::1] eligible, double tol):
    """Eligible column with the most negative reduced cost (< -tol); lowest index on ties."""
    cdef Py_ssize_t j, p, ncol = cost.shape[0], best = -1
    cdef double d, bestd = -tol
    for j in range(ncol):
        if not eligible[j]:
            continue
        d = cost[j]
        for p in range(indptr[j], indptr[j + 1]):
            d -= y[indices[p]] * data[p]
        if d < bestd:
            bestd = d
            best = j
    return best


def harris_ratio(const double[::1] xb, const double[::1] d, const cnp.int64_t[::1] basis,
                 double ptol, double ftol):
    """Two-pass ratio test: bound the step with relaxed feasibility, then take the largest pivot."""
    cdef Py_ssize_t i, m = xb.shape[0], best = -1
    cdef double tmax = 0.0, t
    cdef bint have = False
    for i in range(m):
        if d[i] > ptol:
            t = (xb[i] + ftol) / d[i]
            if not have or t < tmax:
                tmax = t
                have = True
    if not have:
        return -1
    for i in range(m):
        if d[i] > ptol and xb[i] / d[i] <= tmax:
            if best < 0 or d[i] > d[best] or (d[i] == d[best] and basis[i] < basis[best]):
                best = i
    return best

"""Sparse linear programs and a deterministic two-phase revised simplex.

Sign conventions (minimisation):

* row duals ``y``: ``y_i <= 0`` on <= rows, ``y_i >= 0`` on >= rows, free on = rows;
* reduced costs ``d = c - A^T y``: ``d_j >= 0`` where only the lower bound is finite,
  ``d_j <= 0`` where only the upper bound is finite, ``d_j = 0`` for free variables.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy import sparse

from . import kernels

__all__ = [
    "LE", "EQ", "GE", "LinearProgram", "LpSolution", "LpError", "solve", "verify",
    "dump_lp", "load_lp", "certificate_scale", "certificate_ok",
]

log = logging.getLogger(__name__)

LE, EQ, GE = -1, 0, 1
_REL_TEXT = {LE: "<=", EQ: "=", GE: ">="}
_TEXT_REL = {"<=": LE, "=": EQ, "==": EQ, ">=": GE}

REFACTOR_EVERY = 50
PIVOT_TOL = 1e-9
FEAS_TOL = 1e-9
AUTO_SIMPLEX_LIMIT = 200_000  # rows * columns above which method="auto" hands off to HiGHS
IPM_COLUMNS = 5000  # columns above which "highs" uses the interior point method


class LpError(RuntimeError):
    """Numerical breakdown or iteration cap in the simplex."""


@dataclass(eq=False)
class LinearProgram:
    """minimise ``c @ x`` subject to ``A x (rel) b`` and ``lb <= x <= ub``."""

    c: np.ndarray
    A: sparse.csr_matrix
    rel: np.ndarray
    b: np.ndarray
    lb: Optional[np.ndarray] = None
    ub: Optional[np.ndarray] = None
    meta: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        self.c = np.asarray(self.c, float).ravel()
        n = len(self.c)
        self.A = sparse.csr_matrix(self.A, dtype=float)
        if self.A.shape[1] != n and not (self.A.shape[0] == 0):
            raise ValueError(f"A has {self.A.shape[1]} columns, c has {n}")
        if self.A.shape[0] == 0:
            self.A = sparse.csr_matrix((0, n))
        self.rel = np.asarray(self.rel, dtype=np.int64).ravel()
        self.b = np.asarray(self.b, float).ravel()
        if len(self.rel) != self.A.shape[0] or len(self.b) != self.A.shape[0]:
            raise ValueError("rel and b must have one entry per row")
        if not np.all(np.isin(self.rel, (LE, EQ, GE))):
            raise ValueError("relations must be -1 (<=), 0 (=) or +1 (>=)")
        self.lb = np.zeros(n) if self.lb is None else np.asarray(self.lb, float).ravel().copy()
        self.ub = np.full(n, np.inf) if self.ub is None else np.asarray(self.ub, float).ravel().copy()
        if len(self.lb) != n or len(self.ub) != n:
            raise ValueError("bounds must have one entry per variable")
        for name, v in (("c", self.c), ("A", self.A.data), ("b", self.b)):
            if not np.all(np.isfinite(v)):
                raise ValueError(f"{name} has non-finite entries")
        if np.any(self.lb == np.inf) or np.any(self.ub == -np.inf) or np.any(self.lb > self.ub):
            raise ValueError("inconsistent variable bounds")

    @property
    def n_vars(self) -> int:
        return len(self.c)

    @property
    def n_rows(self) -> int:
        return self.A.shape[0]


@dataclass(eq=False)
class LpSolution:
    status: str
    x: Optional[np.ndarray] = None
    objective: float = math.nan
    y: Optional[np.ndarray] = None
    reduced_costs: Optional[np.ndarray] = None
    ray: Optional[np.ndarray] = None
    farkas: Optional[np.ndarray] = None
    iterations: int = 0
    method: str = "simplex"
    residuals: dict = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return self.status == "optimal"

    def summary(self) -> dict:
        return {"status": self.status, "objective": self.objective, "iterations": self.iterations,
                "method": self.method, "residuals": dict(self.residuals)}


def certificate_scale(lp: LinearProgram) -> float:
    b = float(np.max(np.abs(lp.b))) if lp.b.size else 0.0
    c = float(np.max(np.abs(lp.c))) if lp.c.size else 0.0
    return 1.0 + b + c


# -- internal standard form -----------------------------------------------------

@dataclass
class _Standard:
    A: sparse.csc_matrix  # all columns: structural, slack, artificial
    b: np.ndarray
    cost: np.ndarray  # phase-2 costs over all columns
    n_struct: int
    n_slack: int
    art_start: int
    basis0: np.ndarray
    T: sparse.csr_matrix  # user x = x0 + T x_struct
    x0: np.ndarray
    flip: np.ndarray  # internal row = flip * user row
    n_user_rows: int


def _standardise(lp: LinearProgram) -> _Standard:
    n = lp.n_vars
    lb, ub = lp.lb, lp.ub
    x0 = np.zeros(n)
    t_rows, t_cols, t_vals = [], [], []
    bound_rows = []  # (struct col, width)
    k = 0
    for j in range(n):
        lo, hi = lb[j], ub[j]
        if np.isfinite(lo):
            x0[j] = lo
            t_rows.append(j); t_cols.append(k); t_vals.append(1.0)
            if np.isfinite(hi):
                bound_rows.append((k, hi - lo))
            k += 1
        elif np.isfinite(hi):
            x0[j] = hi
            t_rows.append(j); t_cols.append(k); t_vals.append(-1.0)
            k += 1
        else:
            t_rows += [j, j]; t_cols += [k, k + 1]; t_vals += [1.0, -1.0]
            k += 2
    T = sparse.csr_matrix((t_vals, (t_rows, t_cols)), shape=(n, k))
    A1 = (lp.A @ T).tocsr()
    b1 = lp.b - lp.A @ x0
    rel = lp.rel.copy()
    if bound_rows:
        U = sparse.csr_matrix((np.ones(len(bound_rows)), (np.arange(len(bound_rows)), [c for c, _ in bound_rows])),
                              shape=(len(bound_rows), k))
        A1 = sparse.vstack([A1, U], format="csr")
        b1 = np.concatenate([b1, [w for _, w in bound_rows]])
        rel = np.concatenate([rel, np.full(len(bound_rows), LE)])
    mrow = A1.shape[0]
    # equilibrate rows (powers of two keep the scaling exact) and make b >= 0
    amax = abs(A1).max(axis=1).toarray().ravel() if A1.shape[1] else np.zeros(mrow)
    scale = np.where(amax > 0, 2.0 ** -np.round(np.log2(np.where(amax > 0, amax, 1.0))), 1.0)
    A1 = sparse.diags(scale) @ A1
    b1 = b1 * scale
    flip = np.where(b1 < 0, -1.0, 1.0)
    A1 = sparse.diags(flip) @ A1
    b1 = b1 * flip
    rel = (rel * flip).astype(np.int64)
    slack_rows = np.flatnonzero(rel != EQ)
    S = sparse.csr_matrix((np.where(rel[slack_rows] == LE, 1.0, -1.0), (slack_rows, np.arange(len(slack_rows)))),
                          shape=(mrow, len(slack_rows)))
    art_rows = np.flatnonzero(rel != LE)
    R = sparse.csr_matrix((np.ones(len(art_rows)), (art_rows, np.arange(len(art_rows)))),
                          shape=(mrow, len(art_rows)))
    full = sparse.hstack([A1, S, R], format="csc")
    full.sort_indices()
    basis0 = np.empty(mrow, dtype=np.int64)
    slack_of_row = {r: k + i for i, r in enumerate(slack_rows)}
    art_of_row = {r: k + len(slack_rows) + i for i, r in enumerate(art_rows)}
    for r in range(mrow):
        basis0[r] = slack_of_row[r] if rel[r] == LE else art_of_row[r]
    cost = np.zeros(full.shape[1])
    struct_cost = T.T @ lp.c
    cost[:k] = struct_cost
    return _Standard(full, b1, cost, k, len(slack_rows), k + len(slack_rows), basis0, T, x0, flip * scale,
                     lp.n_rows)


class _Simplex:
    def __init__(self, st: _Standard, max_iter: int, tol: float, pricing: str = "dantzig"):
        if pricing not in ("dantzig", "bland"):
            raise ValueError(f"unknown pricing rule {pricing!r}")
        self.pricing = pricing
        self.st = st
        A = st.A
        self.indptr = A.indptr.astype(np.int64)
        self.indices = A.indices.astype(np.int64)
        self.data = A.data.astype(float)
        self.m = A.shape[0]
        self.ncol = A.shape[1]
        self.basis = st.basis0.copy()
        self.is_basic = np.zeros(self.ncol, dtype=np.uint8)
        self.is_basic[self.basis] = 1
        self.allowed = np.ones(self.ncol, dtype=np.uint8)
        self.max_iter = max_iter
        self.tol = tol
        self.iterations = 0
        self._refactor()

    def column(self, j: int) -> np.ndarray:
        col = np.zeros(self.m)
        s, e = self.indptr[j], self.indptr[j + 1]
        col[self.indices[s:e]] = self.data[s:e]
        return col

    def _refactor(self):
        B = self.st.A[:, self.basis].toarray() if self.m else np.zeros((0, 0))
        try:
            self.binv = np.ascontiguousarray(np.linalg.inv(B)) if self.m else np.zeros((0, 0))
        except np.linalg.LinAlgError as exc:
            raise LpError(f"singular basis at iteration {self.iterations}") from exc
        self.xb = self.binv @ self.st.b
        self.xb[(self.xb < 0) & (self.xb > -1e-9)] = 0.0
        self.since_refactor = 0

    def pivot(self, q: int, r: int, d: np.ndarray):
        if abs(d[r]) < 1e-12:
            raise LpError(f"numerical breakdown: pivot {d[r]:.3g} on column {q}, row {r}")
        theta = max(self.xb[r] / d[r], 0.0)
        self.xb -= theta * d
        self.xb[r] = theta
        self.is_basic[self.basis[r]] = 0
        self.basis[r] = q
        self.is_basic[q] = 1
        kernels.eta_update(self.binv, np.ascontiguousarray(d), r)
        self.iterations += 1
        self.since_refactor += 1
        if self.since_refactor >= REFACTOR_EVERY:
            self._refactor()
        else:
            self.xb[(self.xb < 0) & (self.xb > -1e-9)] = 0.0

    def run(self, cost: np.ndarray) -> tuple:
        """Iterate to optimality for ``cost``.  Returns ("optimal" | "unbounded", entering column)."""
        cost = np.ascontiguousarray(cost, dtype=float)
        otol = self.tol * (1.0 + float(np.max(np.abs(cost))) if cost.size else 1.0)
        seen = set()  # bases visited during the current run of degenerate pivots
        bland_mode = self.pricing == "bland"
        while True:
            if self.iterations >= self.max_iter:
                raise LpError(f"iteration cap {self.max_iter} exceeded")
            y = np.ascontiguousarray(cost[self.basis] @ self.binv)
            eligible = np.ascontiguousarray(self.allowed & (1 - self.is_basic))
            bland = bland_mode
            price = kernels.bland_price if bland else kernels.dantzig_price
            q = price(self.indptr, self.indices, self.data, cost, y, eligible, otol)
            if q < 0:
                return "optimal", -1
            d = np.ascontiguousarray(self.binv @ self.column(q))
            ptol = PIVOT_TOL * max(1.0, float(np.max(np.abs(d))))
            xb = np.ascontiguousarray(self.xb)
            if bland:
                r = kernels.ratio_test(xb, d, self.basis, ptol)
            else:
                r = kernels.harris_ratio(xb, d, self.basis, ptol, FEAS_TOL)
            if r < 0:
                return "unbounded", q
            if xb[r] <= FEAS_TOL:
                key = np.sort(self.basis).tobytes()
                if key in seen:
                    bland_mode = True  # cycling: Bland's rule until the next real step
                seen.add(key)
            else:
                seen.clear()
                bland_mode = self.pricing == "bland"
            self.pivot(q, r, d)

    def drive_out_artificials(self):
        """Pivot zero-level basic artificials out where a structural/slack column allows it."""
        art = self.st.art_start
        for r in range(self.m):
            if self.basis[r] < art:
                continue
            row = self.binv[r]
            for j in range(art):
                if self.is_basic[j]:
                    continue
                s, e = self.indptr[j], self.indptr[j + 1]
                v = float(row[self.indices[s:e]] @ self.data[s:e])
                if abs(v) > 1e-7:
                    self.pivot(j, r, self.binv @ self.column(j))
                    break
            # otherwise the row is redundant and the artificial stays at zero

    def exact(self, cost):
        B = self.st.A[:, self.basis].toarray()
        xb = _refined_solve(B, self.st.b) if self.m else np.zeros(0)
        y = _refined_solve(B.T, cost[self.basis]) if self.m else np.zeros(0)
        x = np.zeros(self.ncol)
        x[self.basis] = xb
        return x, y


def _refined_solve(B: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    """Dense solve followed by one step of iterative refinement."""
    x = np.linalg.solve(B, rhs)
    return x + np.linalg.solve(B, rhs - B @ x)


def _simplex(lp: LinearProgram, max_iter: Optional[int], tol: float, pricing: str) -> LpSolution:
    st = _standardise(lp)
    max_iter = max_iter or 50000 + 100 * (st.A.shape[0] + st.A.shape[1])
    sx = _Simplex(st, max_iter, tol, pricing)
    art = st.art_start
    if art < sx.ncol:
        c1 = np.zeros(sx.ncol)
        c1[art:] = 1.0
        sx.run(c1)
        x1, y1 = sx.exact(c1)
        infeas = float(np.sum(x1[art:]))
        if infeas > 1e-9 * (1.0 + float(np.max(np.abs(st.b), initial=0.0))):
            far = st.flip[:st.n_user_rows] * y1[:st.n_user_rows]
            return LpSolution("infeasible", farkas=far, iterations=sx.iterations)
        sx.drive_out_artificials()
        sx.allowed[art:] = 0
    status, q = sx.run(st.cost)
    if status == "unbounded":
        d = sx.binv @ sx.column(q)
        r = np.zeros(sx.ncol)
        r[q] = 1.0
        r[sx.basis] -= d
        ray = st.T @ r[:st.n_struct]
        return LpSolution("unbounded", ray=ray, iterations=sx.iterations)
    xs, ys = sx.exact(st.cost)
    x = st.x0 + st.T @ xs[:st.n_struct]
    y = st.flip[:st.n_user_rows] * ys[:st.n_user_rows]
    return _finish(lp, x, y, sx.iterations, "simplex")


def _finish(lp, x, y, iters, method) -> LpSolution:
    # clamp bound roundoff
    x = np.minimum(np.maximum(x, lp.lb), lp.ub)
    d = lp.c - lp.A.T @ y
    sol = LpSolution("optimal", x=x, objective=float(lp.c @ x), y=y, reduced_costs=d,
                     iterations=iters, method=method)
    sol.residuals = verify(lp, sol)
    return sol


def _highs(lp: LinearProgram, variant: str = "highs-ds") -> LpSolution:
    from scipy.optimize import linprog

    le, ge, eq = lp.rel == LE, lp.rel == GE, lp.rel == EQ
    A_ub = sparse.vstack([lp.A[le], -lp.A[ge]], format="csr")
    b_ub = np.concatenate([lp.b[le], -lp.b[ge]])
    kw = {}
    if A_ub.shape[0]:
        kw.update(A_ub=A_ub, b_ub=b_ub)
    if eq.any():
        kw.update(A_eq=lp.A[eq], b_eq=lp.b[eq])
    bounds = [(None if not np.isfinite(l) else l, None if not np.isfinite(u) else u) for l, u in zip(lp.lb, lp.ub)]
    res = linprog(lp.c, bounds=bounds, method=variant, options={"presolve": True}, **kw)
    if res.status in (2, 3):
        # presolve can confuse "infeasible" with "unbounded"; settle it without presolve
        res = linprog(lp.c, bounds=bounds, method="highs-ds", options={"presolve": False}, **kw)
    if res.status == 2:
        return LpSolution("infeasible", method="highs")
    if res.status == 3:
        return LpSolution("unbounded", method="highs")
    if res.status != 0:
        raise LpError(f"HiGHS failed: {res.message}")
    y = np.zeros(lp.n_rows)
    if A_ub.shape[0]:
        mu = res.ineqlin.marginals
        nle = int(le.sum())
        y[np.flatnonzero(le)] = mu[:nle]
        y[np.flatnonzero(ge)] = -mu[nle:]
    if eq.any():
        y[np.flatnonzero(eq)] = res.eqlin.marginals
    return _finish(lp, np.asarray(res.x, float), y, int(getattr(res, "nit", 0)), variant)


def solve(lp: LinearProgram, method: str = "auto", max_iter: Optional[int] = None,
          tol: float = 1e-10, pricing: str = "dantzig") -> LpSolution:
    """Solve ``lp``.

    ``method`` is "simplex" (the revised simplex here), "highs-ds" or
    "highs-ipm" (scipy's HiGHS dual simplex or interior point with
    crossover), "highs" (dual simplex up to ``IPM_COLUMNS`` columns, interior
    point beyond) or "auto", which uses the simplex while rows * columns stays
    below ``AUTO_SIMPLEX_LIMIT`` and "highs" otherwise.  If the simplex breaks
    down under "auto" (singular basis or iteration cap) the LP is re-solved
    with "highs" and the solution's ``method`` records the hand-off; an
    explicit "simplex" raises ``LpError`` instead.

    With ``pricing="dantzig"`` the entering column is the most negative
    reduced cost (lowest index on ties) and the leaving row comes from a
    Harris two-pass ratio test.  If a basis repeats during a run of degenerate
    pivots the solver switches to Bland's rule (lowest eligible index both
    ways) until a pivot makes progress.  ``pricing="bland"`` uses Bland's
    rule throughout.
    """
    if method == "auto":
        if lp.n_rows * lp.n_vars <= AUTO_SIMPLEX_LIMIT:
            try:
                return _simplex(lp, max_iter, tol, pricing)
            except LpError as exc:
                log.warning("simplex failed (%s); falling back to HiGHS", exc)
                sol = solve(lp, "highs")
                sol.method = f"{sol.method} (simplex fallback: {exc})"
                return sol
        method = "highs"
    if method == "highs":
        method = "highs-ipm" if lp.n_vars > IPM_COLUMNS else "highs-ds"
    if method == "simplex":
        return _simplex(lp, max_iter, tol, pricing)
    if method in ("highs-ds", "highs-ipm"):
        return _highs(lp, method)
    raise ValueError(f"unknown method {method!r}")


def verify(lp: LinearProgram, sol: LpSolution) -> dict:
    """Recompute primal, dual and complementarity residuals from (x, y) alone."""
    x, y = np.asarray(sol.x, float), np.asarray(sol.y, float)
    Ax = lp.A @ x
    s = Ax - lp.b
    viol = np.where(lp.rel == LE, np.maximum(s, 0), np.where(lp.rel == GE, np.maximum(-s, 0), np.abs(s)))
    bviol = np.maximum(lp.lb - x, 0) + np.maximum(x - lp.ub, 0)
    primal = float(max(viol.max(initial=0.0), bviol.max(initial=0.0)))
    ysign = np.where(lp.rel == LE, np.maximum(y, 0), np.where(lp.rel == GE, np.maximum(-y, 0), 0.0))
    d = lp.c - lp.A.T @ y
    lo_f, hi_f = np.isfinite(lp.lb), np.isfinite(lp.ub)
    dviol = np.where(~hi_f, np.maximum(-d, 0), 0.0) + np.where(~lo_f, np.maximum(d, 0), 0.0)
    dual = float(max(ysign.max(initial=0.0), dviol.max(initial=0.0)))
    dpos, dneg = np.maximum(d, 0), np.maximum(-d, 0)
    gap_lo = np.where(lo_f, dpos * np.abs(x - np.where(lo_f, lp.lb, 0)), 0.0)
    gap_hi = np.where(hi_f, dneg * np.abs(np.where(hi_f, lp.ub, 0) - x), 0.0)
    comp = float(max(np.abs(y * s).max(initial=0.0), gap_lo.max(initial=0.0), gap_hi.max(initial=0.0)))
    dual_obj = float(y @ lp.b + np.sum(np.where(lo_f, dpos * np.where(lo_f, lp.lb, 0), 0.0))
                     - np.sum(np.where(hi_f, dneg * np.where(hi_f, lp.ub, 0), 0.0)))
    primal_obj = float(lp.c @ x)
    return {"primal": primal, "dual": dual, "complementarity": comp,
            "duality_gap": primal_obj - dual_obj, "scale": certificate_scale(lp)}


def certificate_ok(lp: LinearProgram, sol: LpSolution, factor: float = 1e-7) -> bool:
    r = verify(lp, sol)
    lim = factor * r["scale"]
    return r["primal"] <= lim and r["dual"] <= lim and r["complementarity"] <= lim


# -- plain-text dump ---------------------------------------------------------------

def _f(v: float) -> str:
    return "inf" if v == np.inf else "-inf" if v == -np.inf else format(float(v), ".17g")


def dump_lp(lp: LinearProgram) -> str:
    """Text form::

        lp <n_vars> <n_rows>
        obj c_0 c_1 ...
        row <rel> <rhs> j:a_j ...        (one per row; rel is <=, = or >=)
        lb l_0 l_1 ...
        ub u_0 u_1 ...
    """
    out = [f"lp {lp.n_vars} {lp.n_rows}", "obj " + " ".join(_f(v) for v in lp.c)]
    A = lp.A.tocsr()
    A.sort_indices()
    for i in range(lp.n_rows):
        s, e = A.indptr[i], A.indptr[i + 1]
        pairs = " ".join(f"{j}:{_f(a)}" for j, a in zip(A.indices[s:e], A.data[s:e]))
        out.append(f"row {_REL_TEXT[int(lp.rel[i])]} {_f(lp.b[i])}" + (" " + pairs if pairs else ""))
    out.append("lb " + " ".join(_f(v) for v in lp.lb))
    out.append("ub " + " ".join(_f(v) for v in lp.ub))
    return "\n".join(out) + "\n"


def load_lp(text: str) -> LinearProgram:
    lines = [ln.split("#", 1)[0].strip() for ln in text.splitlines()]
    lines = [(k + 1, ln) for k, ln in enumerate(lines) if ln]
    if not lines or not lines[0][1].startswith("lp "):
        raise ValueError("line 1: expected 'lp <n_vars> <n_rows>'")
    try:
        _, nv, nr = lines[0][1].split()
        nv, nr = int(nv), int(nr)
        c = None
        lb = ub = None
        rows, cols, vals, rel, b = [], [], [], [], []
        for no, ln in lines[1:]:
            tag, *rest = ln.split()
            if tag == "obj":
                c = np.array([float(v) for v in rest])
            elif tag == "row":
                rel.append(_TEXT_REL[rest[0]])
                b.append(float(rest[1]))
                for pair in rest[2:]:
                    j, a = pair.split(":")
                    rows.append(len(rel) - 1)
                    cols.append(int(j))
                    vals.append(float(a))
            elif tag == "lb":
                lb = np.array([float(v) for v in rest])
            elif tag == "ub":
                ub = np.array([float(v) for v in rest])
            else:
                raise ValueError(f"line {no}: unknown record {tag!r}")
    except (KeyError, IndexError) as exc:
        raise ValueError(f"malformed LP text: {exc}") from exc
    if c is None or len(c) != nv or len(rel) != nr:
        raise ValueError("LP header does not match its body")
    if cols and (max(cols) >= nv or min(cols) < 0):
        raise ValueError("column index out of range")
    A = sparse.csr_matrix((vals, (rows, cols)), shape=(nr, nv))
    return LinearProgram(c, A, np.array(rel, dtype=np.int64), np.array(b), lb, ub)

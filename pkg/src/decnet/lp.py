"""Dense bounded-variable linear programming for the relaxation bounds.

Rows are ``A x (<=|==|>=) b`` with finite boxes on every column. The driver
scales rows and columns, removes fixed columns, adds bounded slacks and
artificials, runs phase 1 and phase 2 of the revised simplex kernel, and
reports a Lagrangian lower bound computed from the final duals. That bound is
valid for any multipliers, so branch-and-bound never depends on the simplex
having stopped exactly at the optimum.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
import scipy.sparse as sp

from . import kernels

LE, EQ, GE = -1, 0, 1
_SENSE = {"<=": LE, "==": EQ, ">=": GE}


@dataclass
class LpProblem:
    A: np.ndarray | sp.spmatrix
    sense: np.ndarray  # -1 (<=), 0 (==), +1 (>=)
    b: np.ndarray
    c: np.ndarray
    lb: np.ndarray
    ub: np.ndarray
    names: list[str] | None = None

    def __post_init__(self):
        sense = np.asarray(
            [(_SENSE[s] if isinstance(s, str) else int(s)) for s in np.asarray(self.sense).tolist()], dtype=np.int64
        )
        self.sense = sense
        self.b = np.asarray(self.b, dtype=float)
        self.c = np.asarray(self.c, dtype=float)
        self.lb = np.asarray(self.lb, dtype=float)
        self.ub = np.asarray(self.ub, dtype=float)
        m, n = self.A.shape
        if self.b.shape != (m,) or self.sense.shape != (m,):
            raise ValueError("row data does not match the constraint matrix")
        if self.c.shape != (n,) or self.lb.shape != (n,) or self.ub.shape != (n,):
            raise ValueError("column data does not match the constraint matrix")
        if not (np.all(np.isfinite(self.lb)) and np.all(np.isfinite(self.ub))):
            raise ValueError("every variable needs finite bounds")

    @property
    def shape(self) -> tuple[int, int]:
        return self.A.shape

    def dense(self) -> np.ndarray:
        return self.A.toarray() if sp.issparse(self.A) else np.asarray(self.A, dtype=float)


@dataclass
class LpSolution:
    status: str  # optimal | infeasible | unbounded-guard | numerical
    x: np.ndarray | None
    objective: float
    iterations: int
    dual_bound: float = -np.inf
    duals: np.ndarray | None = None
    max_violation: float = 0.0
    message: str = ""
    diagnostics: dict = field(default_factory=dict)

    @property
    def optimal(self) -> bool:
        return self.status == "optimal"


def _infeasible(msg: str, its: int = 0, **diag) -> LpSolution:
    return LpSolution("infeasible", None, np.inf, its, np.inf, message=msg, diagnostics=diag)


def lagrangian_bound(A, b, sense, c, lb, ub, y) -> float:
    """``b@y + sum_j min(d_j lb_j, d_j ub_j)`` with ``d = c - A^T y`` after sign-correcting ``y``."""
    y = np.where(sense == LE, np.minimum(y, 0.0), np.where(sense == GE, np.maximum(y, 0.0), y))
    d = c - A.T @ y
    return float(b @ y + np.sum(np.minimum(d * lb, d * ub)))


_PIVOT_TOLERANCES = (1e-7, 1e-5)


def _two_phase(Af, bs, cvec, n, lo, up, x, basis, art, art_rows, tol, limit, piv_tol, backend, csc):
    """Phase 1 on the artificials, then phase 2; returns ``(kind, iterations, Binv, info)``."""
    m, ncol = Af.shape
    refactor_every, stall_limit = 100, 50

    def core(cost, Binv):
        return kernels.run_simplex(Af, bs, cost, lo, up, x, basis, Binv, tol, limit, refactor_every, stall_limit,
                                   piv_tol, backend=backend, csc=csc)

    # the starting basis is a signed unit matrix
    Binv = np.diag(Af[np.arange(m), basis]).astype(float)
    its = 0
    if art.size:
        cost1 = np.zeros(ncol)
        cost1[art] = 1.0
        status, k, Binv = core(cost1, Binv)
        its += k
        if status == kernels.SINGULAR:
            return "singular", its, Binv, "phase 1 pivot too small"
        if status != kernels.OPTIMAL:
            return "numerical", its, Binv, f"phase 1 stopped with kernel status {status}"
        art_val = x[art]
        art_tol = 1e-8 * (1.0 + np.abs(bs[np.array(art_rows)]))
        if np.any(art_val > art_tol):
            i = int(np.argmax(art_val - art_tol))
            return "infeasible", its, Binv, {"row": i, "phase1": float(art_val.sum())}
        x[art] = 0.0
        lo[art] = 0.0
        up[art] = 0.0
    cost2 = np.zeros(ncol)
    cost2[:n] = cvec
    status, k, Binv = core(cost2, Binv)
    its += k
    if status == kernels.SINGULAR:
        return "singular", its, Binv, "phase 2 pivot too small"
    if status == kernels.UNBOUNDED:
        return "unbounded", its, Binv, ""
    if status != kernels.OPTIMAL:
        return "numerical", its, Binv, f"phase 2 kernel status {status}"
    return "optimal", its, Binv, ""


def _refine_basic(Af, bs, x, basis, lo, up, Binv):
    """Recompute the basic values from a fresh factorisation of the final basis.

    Product-form updates drift between refactorisations; one solve plus a
    refinement step brings the row residuals back to round-off. The old values
    are kept if the fresh solve leaves the bounds by more than round-off.
    """
    B = Af[:, basis]
    try:
        lu = scipy.linalg.lu_factor(B)
    except (ValueError, np.linalg.LinAlgError):
        return Binv
    nb = np.ones(Af.shape[1], dtype=bool)
    nb[basis] = False
    rhs = bs - Af[:, nb] @ x[nb]
    xb = scipy.linalg.lu_solve(lu, rhs)
    xb += scipy.linalg.lu_solve(lu, rhs - B @ xb)
    slack = 1e-9 * (1.0 + np.abs(xb))
    if np.any(xb < lo[basis] - slack) or np.any(xb > up[basis] + slack) or not np.all(np.isfinite(xb)):
        return Binv
    x[basis] = np.clip(xb, lo[basis], up[basis])
    return scipy.linalg.lu_solve(lu, np.eye(B.shape[0]))


def solve_lp(problem: LpProblem, tol: float = 1e-9, max_iter: int | None = None,
             backend: str | None = None) -> LpSolution:
    """Minimise ``c x`` over the rows and box of ``problem``."""
    A0 = problem.dense()
    m0, n0 = A0.shape
    b0, c0, lb0, ub0, sense0 = problem.b, problem.c, problem.lb, problem.ub, problem.sense
    if np.any(lb0 > ub0 + tol):
        j = int(np.argmax(lb0 - ub0))
        return _infeasible(f"empty box on column {j}", column=j)
    lb0 = np.minimum(lb0, ub0)

    # fixed columns move to the right-hand side
    free = ub0 - lb0 > 0.0
    fixed_val = np.where(free, 0.0, lb0)
    b1 = b0 - A0 @ fixed_val
    A1 = A0[:, free]
    c1 = c0[free]
    lb1, ub1 = lb0[free], ub0[free]
    const = float(c0 @ fixed_val)

    # rows without free columns are checks only
    nz = np.abs(A1).max(axis=1) if A1.shape[1] else np.zeros(m0)
    empty = nz == 0.0
    slack_tol = 1e-9 * (1.0 + np.abs(b0))
    bad = empty & (((sense0 == EQ) & (np.abs(b1) > slack_tol)) | ((sense0 == LE) & (b1 < -slack_tol))
                   | ((sense0 == GE) & (b1 > slack_tol)))
    if np.any(bad):
        r = int(np.flatnonzero(bad)[0])
        return _infeasible(f"row {r} violated by fixed columns", row=r)
    # inequalities that no point of the box can violate carry no information
    lo_all = np.minimum(A1 * lb1, A1 * ub1).sum(axis=1)
    hi_all = np.maximum(A1 * lb1, A1 * ub1).sum(axis=1)
    redundant = ((sense0 == LE) & (hi_all <= b1)) | ((sense0 == GE) & (lo_all >= b1))
    keep = ~empty & ~redundant
    A1, b1, sense1 = A1[keep], b1[keep], sense0[keep]
    rows_kept = np.flatnonzero(keep)
    m, n = A1.shape

    if n == 0 or m == 0:
        x = fixed_val.copy()
        if n:
            x[free] = np.where(c1 >= 0.0, lb1, ub1)
        obj = float(c0 @ x)
        return LpSolution("optimal", x, obj, 0, obj, np.zeros(m0))

    # scaling: rows then columns by max magnitude
    rs = 1.0 / np.abs(A1).max(axis=1)
    As = A1 * rs[:, None]
    colmax = np.abs(As).max(axis=0)
    cs = np.where(colmax > 0.0, 1.0 / np.where(colmax > 0.0, colmax, 1.0), 1.0)
    As = As * cs[None, :]
    bs = b1 * rs
    lbs, ubs = lb1 / cs, ub1 / cs
    cscale = np.abs(c1 * cs).max()
    cscale = 1.0 if cscale == 0.0 else cscale
    cvec = c1 * cs / cscale

    # activity range per row gives finite slack boxes
    lo_act = np.minimum(As * lbs, As * ubs).sum(axis=1)
    hi_act = np.maximum(As * lbs, As * ubs).sum(axis=1)
    ftol = 1e-9 * (1.0 + np.abs(bs))
    for r in range(m):
        if (sense1[r] != GE and lo_act[r] > bs[r] + ftol[r]) or (sense1[r] != LE and hi_act[r] < bs[r] - ftol[r]):
            return _infeasible(f"row {int(rows_kept[r])} cannot be satisfied within the box", row=int(rows_kept[r]))

    # starting point: structurals at the bound nearest zero
    x_s = np.where(np.abs(lbs) <= np.abs(ubs), lbs, ubs)
    resid = bs - As @ x_s
    cols = [As]
    lo_list, up_list, x_list = [lbs], [ubs], [x_s]
    basis = np.empty(m, dtype=np.int64)
    ncol = n
    slack_cols, art_cols, art_rows = [], [], []
    for r in range(m):
        if sense1[r] == EQ:
            continue
        sign = 1.0 if sense1[r] == LE else -1.0
        cap = max(bs[r] - lo_act[r], 0.0) if sense1[r] == LE else max(hi_act[r] - bs[r], 0.0)
        col = np.zeros(m)
        col[r] = sign
        cols.append(col[:, None])
        lo_list.append(np.zeros(1))
        up_list.append(np.array([cap]))
        val = sign * resid[r]
        if 0.0 <= val <= cap:
            x_list.append(np.array([val]))
            basis[r] = ncol
            resid[r] = 0.0
        else:
            x_list.append(np.zeros(1))
            basis[r] = -1
        slack_cols.append(ncol)
        ncol += 1
    for r in range(m):
        if sense1[r] != EQ and basis[r] >= 0:
            continue
        sign = 1.0 if resid[r] >= 0.0 else -1.0
        col = np.zeros(m)
        col[r] = sign
        cols.append(col[:, None])
        lo_list.append(np.zeros(1))
        up_list.append(np.array([abs(resid[r])]))
        x_list.append(np.array([abs(resid[r])]))
        basis[r] = ncol
        art_cols.append(ncol)
        art_rows.append(r)
        ncol += 1
    Af = np.asfortranarray(np.hstack(cols))
    lo_start = np.concatenate(lo_list)
    up_start = np.concatenate(up_list)
    x = np.concatenate(x_list)
    art = np.array(art_cols, dtype=np.int64)

    csc = kernels.to_csc(Af) if (backend or kernels.BACKEND) == "numba" else None
    limit = max_iter or 50 * (m + ncol)
    x_start, basis_start = x, basis
    failure = ""
    its = 0
    # a stricter pivot tolerance is the fallback when a basis turns out singular
    for piv_tol in _PIVOT_TOLERANCES:
        x, basis = x_start.copy(), basis_start.copy()
        lo, up = lo_start.copy(), up_start.copy()
        try:
            outcome = _two_phase(Af, bs, cvec, n, lo, up, x, basis, art, art_rows, tol, limit, piv_tol,
                                 backend, csc)
        except np.linalg.LinAlgError:
            failure = "singular basis"
            continue
        kind, its_k, Binv, info = outcome
        its += its_k
        if kind == "singular":
            failure = info
            continue
        break
    else:
        return LpSolution("numerical", None, np.nan, its, -np.inf, message=f"simplex failed: {failure}")
    if kind == "infeasible":
        r = int(rows_kept[art_rows[info["row"]]])
        return _infeasible("phase 1 optimum is positive", its, phase1=info["phase1"], row=r)
    if kind == "unbounded":
        return LpSolution("unbounded-guard", None, -np.inf, its, -np.inf,
                          message="unbounded direction despite finite boxes")
    if kind != "optimal":
        return LpSolution("numerical", None, np.nan, its, -np.inf, message=info)
    Binv = _refine_basic(Af, bs, x, basis, lo, up, Binv)
    cost2 = np.zeros(ncol)
    cost2[:n] = cvec

    # duals of the scaled problem -> original rows
    y_s = cost2[basis] @ Binv
    y1 = y_s * rs * cscale
    y = np.zeros(m0)
    y[rows_kept] = y1

    xs = np.clip(x[:n], lbs, ubs)
    x_full = fixed_val.copy()
    x_full[free] = xs * cs
    x_full[free] = np.clip(x_full[free], lb1, ub1)
    obj = float(c0 @ x_full)
    act = A0 @ x_full
    viol = np.where(sense0 == EQ, np.abs(act - b0),
                    np.where(sense0 == LE, np.maximum(act - b0, 0.0), np.maximum(b0 - act, 0.0)))
    # residual relative to the magnitude of the terms summed in each row
    row_scale = np.maximum(np.abs(A0).max(axis=1, initial=0.0), 1.0)
    rel = viol / (row_scale + np.abs(b0) + np.abs(A0) @ np.abs(x_full))
    bound = lagrangian_bound(A0, b0, sense0, c0, lb0, ub0, y)
    sol = LpSolution("optimal", x_full, obj, its, min(bound, obj), y, float(rel.max(initial=0.0)),
                     diagnostics={"rows": m, "cols": n, "constant": const})
    if sol.max_violation > 1e-6:
        cond = float(np.linalg.cond(Af[:, basis]))
        sol.diagnostics["basis_condition"] = cond
        sol.status = "numerical"
        sol.message = f"primal residual {sol.max_violation:.3g} after phase 2 (basis condition {cond:.3g})"
    return sol


def dump_basis(problem: LpProblem, sol: LpSolution) -> str:
    """Debug view: primal values, bounds and reduced costs."""
    A = problem.dense()
    lines = [f"status={sol.status} obj={sol.objective!r} bound={sol.dual_bound!r} iters={sol.iterations}"]
    if sol.x is None:
        return "\n".join(lines + [sol.message])
    d = problem.c - A.T @ sol.duals
    names = problem.names or [f"x{j}" for j in range(A.shape[1])]
    for j, nm in enumerate(names):
        lines.append(f"{nm:>24} {problem.lb[j]:>12.6g} <= {sol.x[j]:>14.8g} <= {problem.ub[j]:<12.6g} d={d[j]:+.3e}")
    return "\n".join(lines)

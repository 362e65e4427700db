"""Hot loop of the bounded-variable revised simplex.

The core is written in plain numpy that numba can compile. Set the environment
variable ``DECNET_DISABLE_NUMBA=1`` (before import) to run it interpreted;
results are the same up to floating-point summation order.
"""

from __future__ import annotations

import os

import numpy as np

OPTIMAL = 0
UNBOUNDED = 1
ITERATION_LIMIT = 2
SINGULAR = 3

_DISABLED = os.environ.get("DECNET_DISABLE_NUMBA", "").strip().lower() not in ("", "0", "false", "no")

try:
    if _DISABLED:
        raise ImportError("numba disabled by DECNET_DISABLE_NUMBA")
    from numba import njit

    BACKEND = "numba"
except ImportError:  # pragma: no cover - exercised via the environment flag
    njit = None
    BACKEND = "numpy"


def simplex_core(A, b, cost, lb, ub, x, basis, Binv, tol, max_iter, refactor_every, stall_limit, piv_tol=1e-7):
    """Minimise ``cost @ x`` s.t. ``A x = b``, ``lb <= x <= ub`` from a basic solution.

    ``basis`` (length m) lists basic columns and ``Binv`` is the inverse of
    their matrix; nonbasic entries of ``x`` must sit at a bound. ``x`` and
    ``basis`` are updated in place. Returns ``(status, iterations, Binv)``.
    """
    m, n = A.shape
    pos = -np.ones(n, dtype=np.int64)
    for k in range(m):
        pos[basis[k]] = k
    Binv = Binv.copy()
    xn = x.copy()
    xn[basis] = 0.0
    x[basis] = Binv @ (b - A @ xn)
    movable = (ub - lb) > 0.0
    bland = False
    stall = 0
    since_refactor = 0
    it = 0
    while it < max_iter:
        if since_refactor >= refactor_every:
            Binv = np.linalg.inv(np.ascontiguousarray(A[:, basis]))
            xn = x.copy()
            xn[basis] = 0.0
            x[basis] = Binv @ (b - A @ xn)
            since_refactor = 0
        y = cost[basis] @ Binv
        d = cost - y @ A
        nonbasic = pos < 0
        inc = nonbasic & movable & (x < ub) & (d < -tol)
        dec = nonbasic & movable & (x > lb) & (d > tol)
        score = np.where(inc | dec, np.abs(d), 0.0)
        j = np.argmax(score)
        if score[j] <= 0.0:
            if since_refactor == 0:
                return OPTIMAL, it, Binv
            since_refactor = refactor_every
            continue
        if bland:
            j = np.nonzero(score > 0.0)[0][0]
        direction = 1.0 if d[j] < 0.0 else -1.0
        alpha = Binv @ np.ascontiguousarray(A[:, j])
        delta = -direction * alpha
        xb = x[basis]
        lbb = lb[basis]
        ubb = ub[basis]
        down = delta < -piv_tol
        up = delta > piv_tol
        safe = np.where(down | up, np.abs(delta), 1.0)
        room = np.where(down, xb - lbb, np.where(up, ubb - xb, np.inf))
        room = np.maximum(room, 0.0)
        relaxed = np.where(down | up, (room + tol) / safe, np.inf)
        exact = np.where(down | up, room / safe, np.inf)
        flip = ub[j] - lb[j]
        theta_max = relaxed.min() if m > 0 else np.inf
        if flip <= theta_max:
            theta = flip
            r = -1
        else:
            # Harris pass two: largest pivot among rows blocking within the relaxed step
            pick = np.where(exact <= theta_max, np.abs(delta), -1.0)
            r = np.argmax(pick)
            if pick[r] <= 0.0:
                return UNBOUNDED, it, Binv
            theta = exact[r]
        if not np.isfinite(theta):
            return UNBOUNDED, it, Binv
        if r < 0:
            x[j] = ub[j] if direction > 0.0 else lb[j]
        else:
            x[j] += direction * theta
        x[basis] = xb + theta * delta
        if r >= 0:
            leave = basis[r]
            x[leave] = lbb[r] if delta[r] < 0.0 else ubb[r]
            piv = alpha[r]
            if abs(piv) < piv_tol:
                return SINGULAR, it, Binv
            row = Binv[r, :] / piv
            Binv -= np.outer(alpha, row)
            Binv[r, :] = row
            basis[r] = j
            pos[leave] = -1
            pos[j] = r
            since_refactor += 1
        gain = theta * abs(d[j])
        if gain <= 1e-12:
            stall += 1
            if stall >= stall_limit:
                bland = True
        else:
            stall = 0
            bland = False
        it += 1
    return ITERATION_LIMIT, it, Binv


def simplex_sparse(colptr, rowidx, vals, A, b, cost, lb, ub, x, basis, Binv, tol, max_iter, refactor_every,
                   stall_limit, piv_tol):
    """Loop form of :func:`simplex_core` over a CSC copy of ``A``; same pivot rules.

    Written for compilation: every product skips zero entries, so an
    iteration costs O(m * nnz(alpha)) instead of dense BLAS calls.
    """
    m, n = A.shape
    Binv = Binv.copy()
    pos = -np.ones(n, dtype=np.int64)
    for k in range(m):
        pos[basis[k]] = k
    movable = np.empty(n, dtype=np.bool_)
    for j in range(n):
        movable[j] = ub[j] - lb[j] > 0.0
    rhs = np.empty(m)
    y = np.empty(m)
    alpha = np.empty(m)
    row = np.empty(m)
    refresh = True
    bland = False
    stall = 0
    since_refactor = 0
    it = 0
    while True:
        if refresh:
            for i in range(m):
                rhs[i] = b[i]
            for j in range(n):
                if pos[j] < 0 and x[j] != 0.0:
                    for p in range(colptr[j], colptr[j + 1]):
                        rhs[rowidx[p]] -= vals[p] * x[j]
            for k in range(m):
                acc = 0.0
                for i in range(m):
                    acc += Binv[k, i] * rhs[i]
                x[basis[k]] = acc
            refresh = False
        if it >= max_iter:
            return ITERATION_LIMIT, it, Binv
        # duals
        for i in range(m):
            y[i] = 0.0
        for k in range(m):
            ck = cost[basis[k]]
            if ck != 0.0:
                for i in range(m):
                    y[i] += ck * Binv[k, i]
        # pricing
        j = -1
        best = 0.0
        dj_sel = 0.0
        for jj in range(n):
            if pos[jj] >= 0 or not movable[jj]:
                continue
            dj = cost[jj]
            for p in range(colptr[jj], colptr[jj + 1]):
                dj -= y[rowidx[p]] * vals[p]
            if (dj < -tol and x[jj] < ub[jj]) or (dj > tol and x[jj] > lb[jj]):
                score = abs(dj)
                if bland:
                    j = jj
                    dj_sel = dj
                    break
                if score > best:
                    best = score
                    j = jj
                    dj_sel = dj
        if j < 0:
            if since_refactor == 0:
                return OPTIMAL, it, Binv
            # confirm optimality on a fresh factorisation
            B = np.zeros((m, m))
            for k in range(m):
                jk = basis[k]
                for p in range(colptr[jk], colptr[jk + 1]):
                    B[rowidx[p], k] = vals[p]
            Binv = np.ascontiguousarray(np.linalg.inv(B))
            since_refactor = 0
            refresh = True
            continue
        direction = 1.0 if dj_sel < 0.0 else -1.0
        for i in range(m):
            alpha[i] = 0.0
        for p in range(colptr[j], colptr[j + 1]):
            r0 = rowidx[p]
            v = vals[p]
            for i in range(m):
                alpha[i] += Binv[i, r0] * v
        # Harris two-pass ratio test
        theta_max = np.inf
        for i in range(m):
            dlt = -direction * alpha[i]
            k = basis[i]
            if dlt < -piv_tol:
                room = max(x[k] - lb[k], 0.0)
                t = (room + tol) / -dlt
            elif dlt > piv_tol:
                room = max(ub[k] - x[k], 0.0)
                t = (room + tol) / dlt
            else:
                continue
            if t < theta_max:
                theta_max = t
        flip = ub[j] - lb[j]
        r = -1
        if flip <= theta_max:
            theta = flip
        else:
            bestpiv = -1.0
            theta = np.inf
            for i in range(m):
                dlt = -direction * alpha[i]
                k = basis[i]
                if dlt < -piv_tol:
                    t = max(x[k] - lb[k], 0.0) / -dlt
                elif dlt > piv_tol:
                    t = max(ub[k] - x[k], 0.0) / dlt
                else:
                    continue
                if t <= theta_max and abs(dlt) > bestpiv:
                    bestpiv = abs(dlt)
                    r = i
                    theta = t
            if r < 0:
                return UNBOUNDED, it, Binv
        if not np.isfinite(theta):
            return UNBOUNDED, it, Binv
        for i in range(m):
            x[basis[i]] -= direction * theta * alpha[i]
        if r < 0:
            x[j] = ub[j] if direction > 0.0 else lb[j]
        else:
            x[j] += direction * theta
            leave = basis[r]
            x[leave] = lb[leave] if -direction * alpha[r] < 0.0 else ub[leave]
            piv = alpha[r]
            if abs(piv) < piv_tol:
                return SINGULAR, it, Binv
            for c in range(m):
                row[c] = Binv[r, c] / piv
            for i in range(m):
                a_i = alpha[i]
                if i == r or a_i == 0.0:
                    continue
                for c in range(m):
                    Binv[i, c] -= a_i * row[c]
            for c in range(m):
                Binv[r, c] = row[c]
            basis[r] = j
            pos[leave] = -1
            pos[j] = r
            since_refactor += 1
            if since_refactor >= refactor_every:
                B = np.zeros((m, m))
                for k in range(m):
                    jk = basis[k]
                    for p in range(colptr[jk], colptr[jk + 1]):
                        B[rowidx[p], k] = vals[p]
                Binv = np.ascontiguousarray(np.linalg.inv(B))
                since_refactor = 0
                refresh = True
        gain = theta * abs(dj_sel)
        if gain <= 1e-12:
            stall += 1
            if stall >= stall_limit:
                bland = True
        else:
            stall = 0
            bland = False
        it += 1


if njit is not None:
    _sparse_compiled = njit(cache=True, nogil=True)(simplex_sparse)
else:
    _sparse_compiled = None


def run_simplex(A, b, cost, lb, ub, x, basis, Binv, tol, max_iter, refactor_every=100, stall_limit=50,
                piv_tol=1e-7, backend: str | None = None, csc=None):
    """Dispatch to the compiled loop kernel or the vectorised numpy kernel."""
    use = backend or BACKEND
    if use == "numba" and _sparse_compiled is not None:
        if csc is None:
            csc = to_csc(A)
        colptr, rowidx, vals = csc
        return _sparse_compiled(colptr, rowidx, vals, A, b, cost, lb, ub, x, basis,
                                np.ascontiguousarray(Binv), tol, max_iter, refactor_every, stall_limit, piv_tol)
    return simplex_core(A, b, cost, lb, ub, x, basis, Binv, tol, max_iter, refactor_every, stall_limit, piv_tol)


def to_csc(A):
    import scipy.sparse as sp

    M = sp.csc_matrix(A)
    M.sort_indices()
    return M.indptr.astype(np.int64), M.indices.astype(np.int64), M.data.astype(np.float64)

"""Independent reference solvers used by the tests.

``vertex_min`` enumerates every vertex of a small bounded LP by brute force:
after substituting fixed columns, a vertex is a choice of active bounds and
active inequality sides that together with the equality rows pins down all
remaining columns.  For a fixed set of active columns the lower/upper
choice only changes the right-hand side, so each active set costs one
factorization solved against all of its bound combinations.
"""

import itertools

import numpy as np


def _independent_rows(E, f, tol=1e-10):
    if E.shape[0] == 0:
        return E, f
    keep = []
    basis = np.zeros((0, E.shape[1]))
    for i in range(E.shape[0]):
        trial = np.vstack([basis, E[i]])
        if np.linalg.matrix_rank(trial, tol) > basis.shape[0]:
            basis = trial
            keep.append(i)
    return E[keep], f[keep]


def vertex_min(lp, tol=1e-9):
    """(objective, x) of the best vertex, or (None, None) if no vertex is feasible.

    The LP must be bounded in every column so that an optimum sits at a vertex.
    """
    A = lp.matrix().toarray()
    lo_r, hi_r = lp.row_bounds()
    lb, ub = lp.lb.astype(float), lp.ub.astype(float)
    n = lp.num_cols
    if not (np.all(np.isfinite(lb)) and np.all(np.isfinite(ub))):
        raise ValueError("vertex_min needs finite column bounds")
    fixed = lb == ub
    free = np.flatnonzero(~fixed)
    x_fixed = np.where(fixed, lb, 0.0)
    shift = A @ x_fixed
    eq = np.isfinite(lo_r) & np.isfinite(hi_r) & (lo_r == hi_r)
    E, f = _independent_rows(A[eq][:, free], (lo_r - shift)[eq])
    # inequality sides as G x <= h
    G, h = [], []
    for i in np.flatnonzero(~eq):
        if np.isfinite(hi_r[i]):
            G.append(A[i, free])
            h.append(hi_r[i] - shift[i])
        if np.isfinite(lo_r[i]):
            G.append(-A[i, free])
            h.append(-(lo_r[i] - shift[i]))
    G = np.array(G).reshape(-1, len(free))
    h = np.array(h)
    nf = len(free)
    d = nf - E.shape[0]
    c = lp.c[free]
    best_val, best_x = None, None
    lbf, ubf = lb[free], ub[free]
    n_ineq = G.shape[0]

    def feasible(X):
        ok = np.all(X >= lbf[:, None] - tol, axis=0) & np.all(X <= ubf[:, None] + tol, axis=0)
        if E.shape[0]:
            ok &= np.all(np.abs(E @ X - f[:, None]) <= tol * (1 + np.abs(f[:, None])), axis=0)
        if n_ineq:
            ok &= np.all(G @ X <= h[:, None] + tol * (1 + np.abs(h[:, None])), axis=0)
        return ok

    for k in range(max(0, d - n_ineq), min(d, nf) + 1):
        choices = np.array(list(itertools.product((0, 1), repeat=k)), dtype=float).T if k else np.zeros((0, 1))
        for S in itertools.combinations(range(nf), k):
            S = list(S)
            rest = [j for j in range(nf) if j not in S]
            vals_S = lbf[S, None] + choices * (ubf[S] - lbf[S])[:, None]
            for R in itertools.combinations(range(n_ineq), d - k):
                R = list(R)
                M = np.vstack([E[:, rest], G[R][:, rest]]) if R else E[:, rest]
                rhs0 = np.concatenate([f, h[R]]) if R else f
                if M.shape[0] != M.shape[1]:
                    continue
                if M.shape[0]:
                    if abs(np.linalg.det(M)) < 1e-12:
                        continue
                    Msub = np.vstack([E[:, S], G[R][:, S]]) if R else E[:, S]
                    rhs = rhs0[:, None] - Msub @ vals_S
                    sol = np.linalg.solve(M, rhs)
                else:
                    sol = np.zeros((0, vals_S.shape[1]))
                X = np.zeros((nf, vals_S.shape[1]))
                X[S] = vals_S
                X[rest] = sol
                ok = feasible(X)
                if not np.any(ok):
                    continue
                objs = c @ X[:, ok]
                i = int(np.argmin(objs))
                if best_val is None or objs[i] < best_val:
                    best_val = float(objs[i])
                    best_x = X[:, ok][:, i]
    if best_val is None:
        return None, None
    x = x_fixed.copy()
    x[free] = best_x
    return float(lp.c @ x + lp.obj_offset), x


def highs_min(lp):
    """Objective from scipy's HiGHS (external cross-check), or None if not optimal."""
    from scipy.optimize import linprog
    from scipy.sparse import vstack

    A = lp.matrix()
    lo, hi = lp.row_bounds()
    eq = np.isfinite(lo) & np.isfinite(hi) & (lo == hi)
    ub_rows = np.isfinite(hi) & ~eq
    lb_rows = np.isfinite(lo) & ~eq
    kw = {}
    if ub_rows.any() or lb_rows.any():
        kw["A_ub"] = vstack([A[ub_rows], -A[lb_rows]])
        kw["b_ub"] = np.concatenate([hi[ub_rows], -lo[lb_rows]])
    if eq.any():
        kw["A_eq"] = A[eq]
        kw["b_eq"] = lo[eq]
    res = linprog(lp.c, bounds=list(zip(lp.lb, lp.ub)), method="highs", **kw)
    if res.status != 0:
        return None
    return float(res.fun + lp.obj_offset)

"""Pure numpy implementations of the simplex inner-loop kernels.

These mirror ``_ckernels.pyx`` one for one and are used when the compiled
extension is unavailable (or disabled through ``BATTERYPH_PURE_PYTHON``).

Status codes for variables: 0 basic, 1 at lower bound, 2 at upper bound,
3 free (nonbasic at zero), 4 fixed.
"""

import numpy as np


def ftran_etas(z, ptr, idx, val, erow, epiv, k):
    """Apply eta matrices 0..k-1 to ``z`` in place (forward transformation)."""
    for e in range(k):
        r = erow[e]
        zr = z[r] / epiv[e]
        z[r] = zr
        if zr != 0.0:
            lo, hi = ptr[e], ptr[e + 1]
            z[idx[lo:hi]] -= val[lo:hi] * zr


def btran_etas(v, ptr, idx, val, erow, epiv, k):
    """Apply transposed eta matrices k-1..0 to ``v`` in place."""
    for e in range(k - 1, -1, -1):
        r = erow[e]
        lo, hi = ptr[e], ptr[e + 1]
        v[r] = (v[r] - np.dot(val[lo:hi], v[idx[lo:hi]])) / epiv[e]


def select_entering(d, status, tol, bland):
    """Index of the most attractive nonbasic variable, or -1 at optimality."""
    viol = np.zeros(len(d))
    s1 = status == 1
    s2 = status == 2
    s3 = status == 3
    viol[s1] = -d[s1]
    viol[s2] = d[s2]
    viol[s3] = np.abs(d[s3])
    if bland:
        cand = np.flatnonzero(viol > tol)
        return int(cand[0]) if len(cand) else -1
    j = int(np.argmax(viol)) if len(viol) else -1
    if j < 0 or viol[j] <= tol:
        return -1
    return j


def ratio_phase2(xb, lbb, ubb, alpha, sigma, tol, pivot_tol, bland, head):
    """Bounded primal ratio test.

    Returns ``(r, t, to_upper)``; ``r == -1`` when no basic variable blocks.
    Dantzig mode uses the Harris two-pass rule, Bland mode the textbook
    minimum ratio with smallest-variable tie breaking.
    """
    delta = -sigma * alpha
    inc = (delta > pivot_tol) & np.isfinite(ubb)
    dec = (delta < -pivot_tol) & np.isfinite(lbb)
    rows = np.flatnonzero(inc | dec)
    if len(rows) == 0:
        return -1, np.inf, False
    upper = inc[rows]
    bound = np.where(upper, ubb[rows], lbb[rows])
    dr = delta[rows]
    t_exact = (bound - xb[rows]) / dr
    mag = np.abs(dr)
    if bland:
        t_exact = np.maximum(t_exact, 0.0)
        tmin = t_exact.min()
        ties = np.flatnonzero(t_exact <= tmin + 1e-12 * max(1.0, tmin))
        k = ties[np.argmin(head[rows[ties]])]
        return int(rows[k]), float(t_exact[k]), bool(upper[k])
    t_relax = (bound + np.where(upper, tol, -tol) - xb[rows]) / dr
    tmax = t_relax.min()
    cand = np.flatnonzero(t_exact <= tmax)
    k = cand[np.argmax(mag[cand])]
    return int(rows[k]), float(max(t_exact[k], 0.0)), bool(upper[k])


def ratio_phase1(xb, lbb, ubb, alpha, sigma, slope0, tol, pivot_tol):
    """Long-step ratio test for the composite (sum of infeasibilities) phase 1.

    Walks the breakpoints of the piecewise-linear infeasibility along the
    ray and stops where its slope turns non-negative.  Returns
    ``(r, t, to_upper)`` with ``r == -1`` if no breakpoint exists.
    """
    delta = -sigma * alpha
    inc = delta > pivot_tol
    dec = delta < -pivot_tol
    fin_u = np.isfinite(ubb)
    fin_l = np.isfinite(lbb)
    below = xb < lbb - tol
    above = xb > ubb + tol
    feas = ~below & ~above

    parts_i, parts_t, parts_u = [], [], []

    def add(mask, bound, to_upper):
        idx = np.flatnonzero(mask)
        if len(idx):
            parts_i.append(idx)
            parts_t.append(np.maximum((bound[idx] - xb[idx]) / delta[idx], 0.0))
            parts_u.append(np.full(len(idx), to_upper))

    add(inc & below, lbb, False)
    add(inc & below & fin_u, ubb, True)
    add(inc & feas & fin_u, ubb, True)
    add(dec & above, ubb, True)
    add(dec & above & fin_l, lbb, False)
    add(dec & feas & fin_l, lbb, False)
    if not parts_i:
        return -1, np.inf, False
    rows = np.concatenate(parts_i)
    ts = np.concatenate(parts_t)
    ups = np.concatenate(parts_u)
    order = np.argsort(ts, kind="mergesort")
    slope = slope0
    for k in order:
        slope += abs(delta[rows[k]])
        if slope >= 0.0:
            return int(rows[k]), float(ts[k]), bool(ups[k])
    k = order[-1]
    return int(rows[k]), float(ts[k]), bool(ups[k])

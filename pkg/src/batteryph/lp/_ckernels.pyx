# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled simplex inner-loop kernels; see _pykernels.py for the reference."""

import numpy as np
cimport numpy as cnp
from libc.math cimport fabs, isfinite, INFINITY

cnp.import_array()


def ftran_etas(double[::1] z, long[::1] ptr, int[::1] idx, double[::1] val,
               long[::1] erow, double[::1] epiv, long k):
    cdef long e, p, r
    cdef double zr
    for e in range(k):
        r = erow[e]
        zr = z[r] / epiv[e]
        z[r] = zr
        if zr != 0.0:
            for p in range(ptr[e], ptr[e + 1]):
                z[idx[p]] -= val[p] * zr


def btran_etas(double[::1] v, long[::1] ptr, int[::1] idx, double[::1] val,
               long[::1] erow, double[::1] epiv, long k):
    cdef long e, p, r
    cdef double s
    for e in range(k - 1, -1, -1):
        r = erow[e]
        s = 0.0
        for p in range(ptr[e], ptr[e + 1]):
            s += val[p] * v[idx[p]]
        v[r] = (v[r] - s) / epiv[e]


def select_entering(double[::1] d, signed char[::1] status, double tol, bint bland):
    cdef Py_ssize_t j, n = d.shape[0], best = -1
    cdef double viol, bestv = tol
    cdef signed char s
    for j in range(n):
        s = status[j]
        if s == 1:
            viol = -d[j]
        elif s == 2:
            viol = d[j]
        elif s == 3:
            viol = fabs(d[j])
        else:
            continue
        if viol > bestv:
            best = j
            bestv = viol
            if bland:
                return best
    return best


def ratio_phase2(double[::1] xb, double[::1] lbb, double[::1] ubb, double[::1] alpha,
                 double sigma, double tol, double pivot_tol, bint bland, long[::1] head):
    cdef Py_ssize_t i, m = xb.shape[0], r = -1
    cdef double delta, t, tmax = INFINITY, best_mag = -1.0, tr = INFINITY, tmin
    cdef bint up = False
    if bland:
        tmin = INFINITY
        for i in range(m):
            delta = -sigma * alpha[i]
            if delta > pivot_tol and isfinite(ubb[i]):
                t = (ubb[i] - xb[i]) / delta
            elif delta < -pivot_tol and isfinite(lbb[i]):
                t = (lbb[i] - xb[i]) / delta
            else:
                continue
            if t < 0.0:
                t = 0.0
            if t < tmin:
                tmin = t
        if tmin == INFINITY:
            return -1, np.inf, False
        for i in range(m):
            delta = -sigma * alpha[i]
            if delta > pivot_tol and isfinite(ubb[i]):
                t = (ubb[i] - xb[i]) / delta
            elif delta < -pivot_tol and isfinite(lbb[i]):
                t = (lbb[i] - xb[i]) / delta
            else:
                continue
            if t < 0.0:
                t = 0.0
            if t <= tmin + 1e-12 * (tmin if tmin > 1.0 else 1.0):
                if r < 0 or head[i] < head[r]:
                    r = i
                    tr = t
                    up = delta > 0
        return r, tr, up
    for i in range(m):
        delta = -sigma * alpha[i]
        if delta > pivot_tol and isfinite(ubb[i]):
            t = (ubb[i] + tol - xb[i]) / delta
        elif delta < -pivot_tol and isfinite(lbb[i]):
            t = (lbb[i] - tol - xb[i]) / delta
        else:
            continue
        if t < tmax:
            tmax = t
    if tmax == INFINITY:
        return -1, np.inf, False
    for i in range(m):
        delta = -sigma * alpha[i]
        if delta > pivot_tol and isfinite(ubb[i]):
            t = (ubb[i] - xb[i]) / delta
        elif delta < -pivot_tol and isfinite(lbb[i]):
            t = (lbb[i] - xb[i]) / delta
        else:
            continue
        if t <= tmax and fabs(delta) > best_mag:
            best_mag = fabs(delta)
            r = i
            tr = t
            up = delta > 0
    if tr < 0.0:
        tr = 0.0
    return r, tr, up


def ratio_phase1(double[::1] xb, double[::1] lbb, double[::1] ubb, double[::1] alpha,
                 double sigma, double slope0, double tol, double pivot_tol):
    cdef Py_ssize_t i, m = xb.shape[0], nb = 0, k
    cdef double delta, slope
    cdef bint below, above
    rows_np = np.empty(2 * m, dtype=np.int64)
    ts_np = np.empty(2 * m, dtype=np.float64)
    ups_np = np.empty(2 * m, dtype=np.int8)
    cdef long[::1] rows = rows_np
    cdef double[::1] ts = ts_np
    cdef signed char[::1] ups = ups_np
    # breakpoints are emitted in the same grouped order as the numpy version
    cdef int group
    for group in range(6):
        for i in range(m):
            delta = -sigma * alpha[i]
            below = xb[i] < lbb[i] - tol
            above = xb[i] > ubb[i] + tol
            if group == 0 and delta > pivot_tol and below:
                ts[nb] = (lbb[i] - xb[i]) / delta; ups[nb] = 0
            elif group == 1 and delta > pivot_tol and below and isfinite(ubb[i]):
                ts[nb] = (ubb[i] - xb[i]) / delta; ups[nb] = 1
            elif group == 2 and delta > pivot_tol and not below and not above and isfinite(ubb[i]):
                ts[nb] = (ubb[i] - xb[i]) / delta; ups[nb] = 1
            elif group == 3 and delta < -pivot_tol and above:
                ts[nb] = (ubb[i] - xb[i]) / delta; ups[nb] = 1
            elif group == 4 and delta < -pivot_tol and above and isfinite(lbb[i]):
                ts[nb] = (lbb[i] - xb[i]) / delta; ups[nb] = 0
            elif group == 5 and delta < -pivot_tol and not below and not above and isfinite(lbb[i]):
                ts[nb] = (lbb[i] - xb[i]) / delta; ups[nb] = 0
            else:
                continue
            if ts[nb] < 0.0:
                ts[nb] = 0.0
            rows[nb] = i
            nb += 1
    if nb == 0:
        return -1, np.inf, False
    order = np.argsort(ts_np[:nb], kind="mergesort")
    cdef long[::1] ordv = order.astype(np.int64)
    slope = slope0
    for k in range(nb):
        i = rows[ordv[k]]
        slope += fabs(sigma * alpha[i])
        if slope >= 0.0:
            return int(i), float(ts[ordv[k]]), bool(ups[ordv[k]])
    k = ordv[nb - 1]
    return int(rows[k]), float(ts[k]), bool(ups[k])

"""Bounded-variable primal revised simplex.

Every row gets a logical variable r_i with ``A x - r = 0`` and the row limits
become bounds on r, so all constraints are handled as bounds.  Phase 1
minimises the sum of bound infeasibilities of the basic variables starting
from any basis (slack basis on a cold start, the supplied basis on a warm
start); logicals of equality rows have equal bounds and so act as phase-1
artificials that can never re-enter once they leave.

The basis inverse is a sparse LU (SuperLU via scipy) followed by a
product-form file of eta updates, rebuilt every ``refactor_every`` pivots.
"""

from __future__ import annotations

import time

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from . import kernels as _default_kernels
from .model import INF, Basis, LPSolution, LPStatus, SolverOptions, StandardFormLP

BASIC, AT_LB, AT_UB, FREE, FIXED = 0, 1, 2, 3, 4


def _backend_name(kern):
    if kern is _default_kernels:
        return _default_kernels.BACKEND
    return "cython" if kern.__name__.endswith("_ckernels") else "python"


class SingularBasis(RuntimeError):
    pass


class _Factor:
    """LU of a basis matrix plus a product-form eta file."""

    def __init__(self, B, m, kern):
        self.kern = kern
        self.m = m
        try:
            self.lu = splu(B, permc_spec="COLAMD")
        except RuntimeError as exc:
            raise SingularBasis(str(exc)) from exc
        self.k = 0
        cap = 16 * max(m, 1)
        self.idx = np.empty(cap, dtype=np.int32)
        self.val = np.empty(cap, dtype=np.float64)
        self.ptr = np.zeros(64, dtype=np.int64)
        self.row = np.empty(64, dtype=np.int64)
        self.piv = np.empty(64, dtype=np.float64)

    def ftran(self, a):
        z = self.lu.solve(a)
        if not np.all(np.isfinite(z)):
            raise SingularBasis("non-finite FTRAN result")
        if self.k:
            self.kern.ftran_etas(z, self.ptr, self.idx, self.val, self.row, self.piv, self.k)
        return z

    def btran(self, c):
        v = np.array(c, dtype=np.float64)
        if self.k:
            self.kern.btran_etas(v, self.ptr, self.idx, self.val, self.row, self.piv, self.k)
        y = self.lu.solve(v, trans="T")
        if not np.all(np.isfinite(y)):
            raise SingularBasis("non-finite BTRAN result")
        return y

    def update(self, r, alpha):
        nz = np.flatnonzero(alpha)
        nz = nz[(nz != r) & (np.abs(alpha[nz]) > 1e-14)]
        k = self.k
        if k + 1 >= len(self.ptr):
            grow = len(self.ptr) * 2
            self.ptr = np.resize(self.ptr, grow)
            self.row = np.resize(self.row, grow)
            self.piv = np.resize(self.piv, grow)
        start = self.ptr[k]
        end = start + len(nz)
        if end > len(self.idx):
            cap = max(2 * len(self.idx), end)
            self.idx = np.resize(self.idx, cap)
            self.val = np.resize(self.val, cap)
        self.idx[start:end] = nz
        self.val[start:end] = alpha[nz]
        self.row[k] = r
        self.piv[k] = alpha[r]
        self.ptr[k + 1] = end
        self.k = k + 1


class RevisedSimplex:
    """Single-use solver instance; owns its workspace."""

    def __init__(self, lp: StandardFormLP, options: SolverOptions | None = None, kernels=None):
        self.lp = lp
        self.opts = options or SolverOptions()
        self.kern = kernels or _default_kernels
        n, m = lp.num_cols, lp.num_rows
        self.n, self.m = n, m
        A = lp.matrix().tocsc()
        self.Af = sp.hstack([A, -sp.identity(m, format="csc")], format="csc")
        self.AT = A.transpose().tocsr()
        # costs stay unscaled so opt_tol is in objective units; scaling by
        # max|c| let penalty-sized costs loosen the test on ordinary ones
        self.cost = np.concatenate([lp.c, np.zeros(m)])
        rlo, rhi = lp.row_bounds()
        self.lb = np.concatenate([lp.lb, rlo])
        self.ub = np.concatenate([lp.ub, rhi])
        self.max_iter = self.opts.max_iter if self.opts.max_iter is not None else 50 * (n + m) + 1000
        self.stats = {"phase1_iterations": 0, "phase2_iterations": 0, "refactorizations": 0,
                      "bound_flips": 0, "basis_repairs": 0, "warm_start": "none",
                      "backend": _backend_name(self.kern)}

    # ------------------------------------------------------------------ setup
    def _nonbasic_position(self, j, want):
        lo, hi = self.lb[j], self.ub[j]
        if lo == hi:
            return FIXED, lo
        if want == AT_UB and np.isfinite(hi):
            return AT_UB, hi
        if want == FREE and not np.isfinite(lo) and not np.isfinite(hi):
            return FREE, 0.0
        if np.isfinite(lo):
            return AT_LB, lo
        if np.isfinite(hi):
            return AT_UB, hi
        return FREE, 0.0

    def _slack_basis(self):
        n, m = self.n, self.m
        self.head = np.arange(n, n + m, dtype=np.int64)
        self.status = np.empty(n + m, dtype=np.int8)
        self.x = np.zeros(n + m)
        for j in range(n):
            self.status[j], self.x[j] = self._nonbasic_position(j, AT_LB)
        self.status[n:] = BASIC

    def _load_basis(self, basis: Basis) -> bool:
        n, m = self.n, self.m
        head = np.asarray(basis.head, dtype=np.int64)
        status = np.asarray(basis.status, dtype=np.int8)
        if len(head) != m or len(status) != n + m:
            return False
        if m and (head.min() < 0 or head.max() >= n + m or len(np.unique(head)) != m):
            return False
        if np.count_nonzero(status == BASIC) != m or np.any(status[head] != BASIC):
            return False
        self.head = head.copy()
        self.status = status.copy()
        self.x = np.zeros(n + m)
        for j in np.flatnonzero(self.status != BASIC):
            self.status[j], self.x[j] = self._nonbasic_position(j, int(self.status[j]))
        return True

    def _refactor(self):
        B = self.Af[:, self.head]
        self.factor = _Factor(B.tocsc(), self.m, self.kern)
        self.stats["refactorizations"] += 1
        self._recompute_xb()

    def _recompute_xb(self):
        xn = self.x.copy()
        xn[self.head] = 0.0
        rhs = -(self.Af @ xn)
        self.xb = self.factor.ftran(rhs)
        self.x[self.head] = self.xb
        self.lbb = self.lb[self.head]
        self.ubb = self.ub[self.head]

    def _repair(self):
        """Fall back to the slack basis after a singular factorisation."""
        self.stats["basis_repairs"] += 1
        keep_x = self.x.copy()
        self._slack_basis()
        for j in range(self.n):
            if self.status[j] in (AT_LB, AT_UB):
                lo, hi = self.lb[j], self.ub[j]
                want = AT_UB if (np.isfinite(hi) and abs(keep_x[j] - hi) < abs(keep_x[j] - lo)) else AT_LB
                self.status[j], self.x[j] = self._nonbasic_position(j, want)
        self._refactor()

    # --------------------------------------------------------------- helpers
    def _reduced_costs(self, cb, phase):
        y = self.factor.btran(cb)
        d = np.empty(self.n + self.m)
        if phase == 1:
            d[: self.n] = -(self.AT @ y)
        else:
            d[: self.n] = self.cost[: self.n] - (self.AT @ y)
        d[self.n:] = y
        return y, d

    def _column(self, j):
        a = np.zeros(self.m)
        lo, hi = self.Af.indptr[j], self.Af.indptr[j + 1]
        a[self.Af.indices[lo:hi]] = self.Af.data[lo:hi]
        return a

    def _infeasible_masks(self):
        tol = self.opts.feas_tol
        below = self.xb < self.lbb - tol
        above = self.xb > self.ubb + tol
        return below, above

    # ------------------------------------------------------------------ main
    def solve(self) -> LPSolution:
        t0 = time.perf_counter()
        opts = self.opts
        if self.m == 0:
            return self._solve_no_rows(t0)
        warm = opts.warm_start
        if warm is not None:
            if self._load_basis(warm):
                self.stats["warm_start"] = "used"
            else:
                self.stats["warm_start"] = "stale-fallback"
                self._slack_basis()
        else:
            self._slack_basis()
        try:
            self._refactor()
        except SingularBasis:
            if warm is not None:
                self.stats["warm_start"] = "stale-fallback"
            try:
                self._repair()
            except SingularBasis:
                return self._finish(LPStatus.NUMERICAL, None, None, 0, t0)
        status, y, d, it = self._iterate()
        return self._finish(status, y, d, it, t0)

    def _iterate(self):
        opts = self.opts
        kern = self.kern
        tol, ptol = opts.feas_tol, opts.pivot_tol
        bland_default = opts.pricing == "bland"
        bland = bland_default
        streak = 0
        it = 0
        verify_rounds = 0
        repairs_left = 3
        y = d = None
        while True:
            if it >= self.max_iter:
                return LPStatus.ITERATION_LIMIT, y, d, it
            try:
                if self.factor.k >= opts.refactor_every:
                    self._refactor()
                below, above = self._infeasible_masks()
                phase = 1 if (below.any() or above.any()) else 2
                if phase == 1:
                    cb = np.zeros(self.m)
                    cb[below] = -1.0
                    cb[above] = 1.0
                    dtol = tol
                else:
                    cb = self.cost[self.head]
                    dtol = opts.opt_tol
                y, d = self._reduced_costs(cb, phase)
                j = kern.select_entering(d, self.status, dtol, bland)
                if j < 0:
                    # confirm on a fresh factorisation before declaring
                    if self.factor.k > 0 and verify_rounds < 5:
                        verify_rounds += 1
                        self._refactor()
                        continue
                    if phase == 1:
                        return LPStatus.INFEASIBLE, y, d, it
                    return LPStatus.OPTIMAL, y, d, it
                verify_rounds = 0
                dj = d[j]
                sigma = 1.0 if (dj < 0) else -1.0
                alpha = self.factor.ftran(self._column(j))
                rng = self.ub[j] - self.lb[j]
                if phase == 1:
                    r, t, to_upper = kern.ratio_phase1(self.xb, self.lbb, self.ubb, alpha, sigma,
                                                       sigma * dj, tol, ptol)
                    self.stats["phase1_iterations"] += 1
                else:
                    r, t, to_upper = kern.ratio_phase2(self.xb, self.lbb, self.ubb, alpha, sigma,
                                                       tol, ptol, bland, self.head)
                    self.stats["phase2_iterations"] += 1
                it += 1
                if r < 0 or rng <= t:
                    if not np.isfinite(rng):
                        if phase == 2:
                            return LPStatus.UNBOUNDED, y, d, it
                        self._refactor()
                        continue
                    # entering variable jumps to its opposite bound
                    self.xb -= sigma * rng * alpha
                    self.x[self.head] = self.xb
                    if self.status[j] == AT_LB:
                        self.status[j], self.x[j] = AT_UB, self.ub[j]
                    else:
                        self.status[j], self.x[j] = AT_LB, self.lb[j]
                    self.stats["bound_flips"] += 1
                    streak = 0
                    bland = bland_default
                    continue
                if abs(alpha[r]) < 1e-11:
                    self._refactor()
                    continue
                if t <= 1e-12:
                    streak += 1
                    if streak > opts.degeneracy_streak:
                        bland = True
                else:
                    streak = 0
                    bland = bland_default
                self.xb -= sigma * t * alpha
                xj = self.x[j] + sigma * t
                leave = self.head[r]
                if self.lb[leave] == self.ub[leave]:
                    self.status[leave], self.x[leave] = FIXED, self.lb[leave]
                elif to_upper:
                    self.status[leave], self.x[leave] = AT_UB, self.ub[leave]
                else:
                    self.status[leave], self.x[leave] = AT_LB, self.lb[leave]
                self.head[r] = j
                self.status[j] = BASIC
                self.xb[r] = xj
                self.lbb[r] = self.lb[j]
                self.ubb[r] = self.ub[j]
                self.factor.update(r, alpha)
                self.x[self.head] = self.xb
            except SingularBasis:
                if repairs_left == 0:
                    return LPStatus.NUMERICAL, y, d, it
                repairs_left -= 1
                try:
                    self._repair()
                except SingularBasis:
                    return LPStatus.NUMERICAL, y, d, it

    def _solve_no_rows(self, t0):
        n = self.n
        x = np.zeros(n)
        status = LPStatus.OPTIMAL
        for j in range(n):
            cj = self.cost[j]
            lo, hi = self.lb[j], self.ub[j]
            if cj > 0:
                x[j] = lo
            elif cj < 0:
                x[j] = hi
            else:
                x[j] = lo if np.isfinite(lo) else (hi if np.isfinite(hi) else 0.0)
            if not np.isfinite(x[j]):
                status = LPStatus.UNBOUNDED
                x[j] = 0.0
        self.x = x
        self.head = np.zeros(0, dtype=np.int64)
        self.status = np.array([AT_LB if x[j] == self.lb[j] else AT_UB for j in range(n)], dtype=np.int8)
        d = self.cost.copy()
        return self._finish(status, np.zeros(0), d, 0, t0)

    def _finish(self, status, y, d, it, t0):
        lp = self.lp
        n, m = self.n, self.m
        x = self.x[:n].copy() if hasattr(self, "x") else np.zeros(n)
        if y is None:
            y = np.zeros(m)
        if d is None:
            d = np.zeros(n + m)
        duals = y
        rc = d[:n]
        primal_res = lp.max_violation(x)
        dual_res = 0.0
        if status == LPStatus.OPTIMAL:
            st = self.status
            viol = np.zeros(n + m)
            viol[st == AT_LB] = np.maximum(-d[st == AT_LB], 0.0)
            viol[st == AT_UB] = np.maximum(d[st == AT_UB], 0.0)
            viol[st == FREE] = np.abs(d[st == FREE])
            viol[st == BASIC] = np.abs(d[st == BASIC])
            dual_res = float(viol.max()) if len(viol) else 0.0
            self.stats["duality_gap"] = self._duality_gap(x, d)
        self.stats["solve_seconds"] = time.perf_counter() - t0
        basis = None
        if hasattr(self, "head") and status in (LPStatus.OPTIMAL, LPStatus.ITERATION_LIMIT):
            basis = Basis(self.head.copy(), self.status.copy())
        return LPSolution(status=status, x=x, duals=duals, reduced_costs=rc,
                          objective=lp.objective(x), iterations=it,
                          primal_residual=primal_res, dual_residual=dual_res,
                          basis=basis, stats=dict(self.stats))

    def _duality_gap(self, x, d):
        """|primal - dual| with the dual objective built from row and column bounds."""
        dd = d
        nb = (self.status != BASIC) & (dd != 0)
        bound = np.where(dd > 0, self.lb, self.ub)
        bound = np.where(np.isfinite(bound), bound, self.x)
        dual = float(np.dot(dd[nb], bound[nb]))
        primal = float(self.lp.c @ x)
        return abs(primal - dual)


def solve_lp(lp: StandardFormLP, options: SolverOptions | None = None, kernels=None) -> LPSolution:
    """Solve ``lp`` from a cold start (or ``options.warm_start`` when given)."""
    return RevisedSimplex(lp, options, kernels).solve()


def warm_solve(lp: StandardFormLP, basis: Basis, options: SolverOptions | None = None,
               kernels=None) -> LPSolution:
    """Solve starting from ``basis``; an unusable basis falls back to a cold start."""
    opts = options or SolverOptions()
    opts = SolverOptions(**{**opts.__dict__, "warm_start": basis})
    return RevisedSimplex(lp, opts, kernels).solve()

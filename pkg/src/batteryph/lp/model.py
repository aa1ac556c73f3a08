"""Data containers for linear programs and their solutions."""

from __future__ import annotations

import dataclasses
import enum
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.sparse as sp

INF = np.inf

SENSES = ("L", "E", "G")


class LPStatus(str, enum.Enum):
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"
    UNBOUNDED = "unbounded"
    ITERATION_LIMIT = "iteration-limit"
    NUMERICAL = "numerical-error"


@dataclass
class StandardFormLP:
    """min c.x + offset  s.t.  row_i(x) (<=|=|>=) rhs_i,  lb <= x <= ub.

    The constraint matrix is held as row-major triplets.  ``ranges`` follows
    MPS semantics (NaN where a row has no range).
    """

    c: np.ndarray
    rows: np.ndarray
    cols: np.ndarray
    vals: np.ndarray
    senses: np.ndarray
    rhs: np.ndarray
    lb: np.ndarray
    ub: np.ndarray
    col_names: list = field(default_factory=list)
    row_names: list = field(default_factory=list)
    ranges: Optional[np.ndarray] = None
    obj_offset: float = 0.0
    name: str = "LP"

    def __post_init__(self):
        self.c = np.asarray(self.c, dtype=float)
        self.rows = np.asarray(self.rows, dtype=np.int64)
        self.cols = np.asarray(self.cols, dtype=np.int64)
        self.vals = np.asarray(self.vals, dtype=float)
        self.senses = np.asarray(self.senses, dtype="<U1")
        self.rhs = np.asarray(self.rhs, dtype=float)
        self.lb = np.asarray(self.lb, dtype=float)
        self.ub = np.asarray(self.ub, dtype=float)
        if self.ranges is None:
            self.ranges = np.full(len(self.rhs), np.nan)
        else:
            self.ranges = np.asarray(self.ranges, dtype=float)
        n, m = len(self.c), len(self.rhs)
        if not self.col_names:
            self.col_names = [f"x{j}" for j in range(n)]
        if not self.row_names:
            self.row_names = [f"r{i}" for i in range(m)]
        self._csr = None
        self.validate()

    @property
    def num_cols(self) -> int:
        return len(self.c)

    @property
    def num_rows(self) -> int:
        return len(self.rhs)

    def validate(self):
        n, m = self.num_cols, self.num_rows
        for name, arr, size in (("lb", self.lb, n), ("ub", self.ub, n), ("senses", self.senses, m),
                                ("ranges", self.ranges, m), ("col_names", self.col_names, n),
                                ("row_names", self.row_names, m)):
            if len(arr) != size:
                raise ValueError(f"{name} has length {len(arr)}, expected {size}")
        if not (len(self.rows) == len(self.cols) == len(self.vals)):
            raise ValueError("triplet arrays differ in length")
        if len(self.rows) and (self.rows.min() < 0 or self.rows.max() >= m):
            raise ValueError("row index out of range")
        if len(self.cols) and (self.cols.min() < 0 or self.cols.max() >= n):
            raise ValueError("column index out of range")
        if not np.all(np.isfinite(self.c)):
            raise ValueError("objective coefficients must be finite")
        if not np.all(np.isfinite(self.vals)):
            raise ValueError("matrix coefficients must be finite")
        if np.any(self.lb > self.ub):
            j = int(np.flatnonzero(self.lb > self.ub)[0])
            raise ValueError(f"column {self.col_names[j]!r} has lb > ub")
        bad = [s for s in set(self.senses.tolist()) if s not in SENSES]
        if bad:
            raise ValueError(f"unknown row sense(s) {bad}")

    def matrix(self) -> sp.csr_matrix:
        if self._csr is None:
            A = sp.coo_matrix((self.vals, (self.rows, self.cols)),
                              shape=(self.num_rows, self.num_cols)).tocsr()
            A.sum_duplicates()
            self._csr = A
        return self._csr

    def row_bounds(self):
        """Lower and upper limits on each row activity."""
        m = self.num_rows
        lo = np.full(m, -INF)
        hi = np.full(m, INF)
        s, b, r = self.senses, self.rhs, self.ranges
        has_r = ~np.isnan(r)
        L, E, G = s == "L", s == "E", s == "G"
        hi[L] = b[L]
        lo[L & has_r] = b[L & has_r] - np.abs(r[L & has_r])
        lo[G] = b[G]
        hi[G & has_r] = b[G & has_r] + np.abs(r[G & has_r])
        lo[E] = b[E]
        hi[E] = b[E]
        pos = E & has_r & (r > 0)
        neg = E & has_r & (r < 0)
        hi[pos] = b[pos] + r[pos]
        lo[neg] = b[neg] + r[neg]
        return lo, hi

    def activity(self, x) -> np.ndarray:
        return self.matrix() @ np.asarray(x, dtype=float)

    def objective(self, x) -> float:
        return float(self.c @ np.asarray(x, dtype=float)) + self.obj_offset

    def max_violation(self, x) -> float:
        """Largest bound or row violation of the point ``x``."""
        x = np.asarray(x, dtype=float)
        act = self.activity(x)
        lo, hi = self.row_bounds()
        viol = [0.0]
        if len(x):
            viol.append(float(np.max(np.maximum(self.lb - x, 0.0))))
            viol.append(float(np.max(np.maximum(x - self.ub, 0.0))))
        if len(act):
            viol.append(float(np.max(np.maximum(lo - act, 0.0))))
            viol.append(float(np.max(np.maximum(act - hi, 0.0))))
        return max(viol)

    def replace(self, **changes) -> "StandardFormLP":
        """Copy with some fields swapped; the matrix cache is kept when the triplets are unchanged."""
        out = dataclasses.replace(self, **changes)
        if not ({"rows", "cols", "vals"} & changes.keys()):
            out._csr = self._csr
        return out

    def same_structure(self, other: "StandardFormLP") -> bool:
        return (self.num_rows == other.num_rows and self.num_cols == other.num_cols
                and np.array_equal(self.rows, other.rows) and np.array_equal(self.cols, other.cols)
                and np.array_equal(self.vals, other.vals))


@dataclass
class Basis:
    """Simplex basis over structural + logical variables.

    ``head[i]`` is the variable basic in row i; ``status`` codes every
    variable (see ``simplex`` for the codes).
    """

    head: np.ndarray
    status: np.ndarray

    def copy(self) -> "Basis":
        return Basis(self.head.copy(), self.status.copy())

    def extend(self, n_old: int, add_cols: int, add_rows: int) -> "Basis":
        """Basis for the LP with ``add_cols`` columns and ``add_rows`` rows appended.

        New columns start nonbasic at their lower bound and the new rows'
        logicals join the basis, so a valid basis stays square and nonsingular.
        """
        m_old = len(self.head)
        n_new = n_old + add_cols
        head = np.where(self.head >= n_old, self.head + add_cols, self.head)
        head = np.concatenate([head, n_new + m_old + np.arange(add_rows)]).astype(np.int64)
        status = np.concatenate([self.status[:n_old], np.full(add_cols, 1, dtype=np.int8),
                                 self.status[n_old:], np.zeros(add_rows, dtype=np.int8)])
        return Basis(head, status.astype(np.int8))


@dataclass
class SolverOptions:
    feas_tol: float = 1e-7
    opt_tol: float = 1e-9
    max_iter: Optional[int] = None
    pricing: str = "dantzig"
    degeneracy_streak: int = 60
    refactor_every: int = 100
    pivot_tol: float = 1e-9
    warm_start: Optional[Basis] = None

    def __post_init__(self):
        if self.feas_tol <= 0 or self.opt_tol <= 0:
            raise ValueError("tolerances must be positive")
        if self.pricing not in ("dantzig", "bland"):
            raise ValueError(f"unknown pricing rule {self.pricing!r}")
        if self.refactor_every < 1:
            raise ValueError("refactor_every must be >= 1")


@dataclass
class LPSolution:
    status: LPStatus
    x: np.ndarray
    duals: np.ndarray
    reduced_costs: np.ndarray
    objective: float
    iterations: int
    primal_residual: float
    dual_residual: float
    basis: Optional[Basis] = None
    stats: dict = field(default_factory=dict)

    @property
    def optimal(self) -> bool:
        return self.status == LPStatus.OPTIMAL

    def stats_json(self) -> dict:
        out = {"status": self.status.value, "objective": self.objective,
               "iterations": self.iterations, "primal_residual": self.primal_residual,
               "dual_residual": self.dual_residual}
        out.update(self.stats)
        return out

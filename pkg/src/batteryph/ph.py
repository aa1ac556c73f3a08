"""Progressive hedging over time periods with shared placement and SOC boundaries.

Each period of the horizon is a scenario with a uniform probability.  Two
classes of first-stage variables must agree across the scenarios that own
them:

* placement x[n]: owned by every period, weights P(s);
* SOC boundary E[n]@p: the SOC of bus n at the last hour of period p, owned
  by period p (its last SOC column) and period p+1 (its carried-in SOC
  column) with weight 0.5 each.

Subproblem objectives are the unweighted period costs f_s, so bounds and
incumbent costs are horizon totals.  The Lagrangian bound
sum_s min(f_s + w_s.x_s) is valid because every variable's weights sum to
zero over its owners (owner weights are equal within a variable).  The
proximal term (rho/2)(x - xbar)^2 is replaced by tangent cuts so every
subproblem stays an LP.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .lp import LPStatus, SolverOptions, StandardFormLP, solve_lp, warm_solve
from .network import DeenergizationSchedule, Network
from .opf import BatteryConfig, CostConfig, PeriodSlice, PeriodSubproblem, build_period_lp
from .runtime import WorkerPool, WorkPlan, ordered_sum
from .solution import PlanningSolution, check_feasibility, evaluate_cost, solution_from_lp, stitch

PLACEMENT, SOC = "placement", "soc"


class PHError(RuntimeError):
    pass


class SubproblemFailure(PHError):
    def __init__(self, period, status, stage):
        super().__init__(f"period {period}: {stage} solve returned {status}")
        self.period = period
        self.status = status


# ------------------------------------------------------------------ partition

@dataclass(frozen=True)
class ScenarioPartition:
    bounds: tuple
    probabilities: tuple

    def __post_init__(self):
        if not self.bounds:
            raise ValueError("partition needs at least one period")
        pos = 0
        for a, b in self.bounds:
            if a != pos or b <= a:
                raise ValueError("periods must be contiguous, non-empty and start at hour 0")
            pos = b
        if len(self.probabilities) != len(self.bounds):
            raise ValueError("one probability per period required")
        if any(p <= 0 for p in self.probabilities) or abs(sum(self.probabilities) - 1.0) > 1e-12:
            raise ValueError("probabilities must be positive and sum to 1")

    @property
    def n_periods(self) -> int:
        return len(self.bounds)

    @property
    def horizon(self) -> int:
        return self.bounds[-1][1]

    @property
    def lengths(self) -> list:
        return [b - a for a, b in self.bounds]

    def slices(self, demand: np.ndarray, schedule: DeenergizationSchedule) -> list:
        last = self.n_periods - 1
        return [PeriodSlice.build(range(a, b), demand, schedule, has_left_boundary=i > 0,
                                  closes_horizon=i == last)
                for i, (a, b) in enumerate(self.bounds)]


def make_partition(horizon: int, target: int, n_periods: Optional[int] = None,
                   hours_per_day: int = 24) -> ScenarioPartition:
    """Split ``horizon`` hours into periods of ``target`` hours.

    The period count is ``horizon // target`` (at least one) unless
    ``n_periods`` is given.  Leftover hours go to the final periods one day
    at a time, starting with the last period and moving backwards; a
    leftover shorter than a day goes to the last period.
    """
    if target < 1:
        raise ValueError("target period length must be >= 1 hour")
    if horizon < 1:
        raise ValueError("horizon must be >= 1 hour")
    P = n_periods if n_periods is not None else max(1, horizon // target)
    if P < 1 or P * target > horizon:
        if n_periods is None:
            P = 1
        else:
            raise ValueError(f"{n_periods} periods of {target} h exceed the {horizon} h horizon")
    lengths = [target] * P if P * target <= horizon else [horizon]
    rest = horizon - sum(lengths)
    k = P - 1
    while rest >= hours_per_day:
        lengths[k] += hours_per_day
        rest -= hours_per_day
        k = k - 1 if k > 0 else P - 1
    lengths[-1] += rest
    bounds, pos = [], 0
    for n in lengths:
        bounds.append((pos, pos + n))
        pos += n
    return ScenarioPartition(tuple(bounds), tuple([1.0 / P] * P))


# --------------------------------------------------------- first-stage vars

@dataclass(frozen=True)
class FirstStageVar:
    id: str
    kind: str
    bus: str
    boundary: Optional[int]
    owners: tuple
    weights: tuple
    lo: float
    hi: float


def build_first_stage(partition: ScenarioPartition, candidates, batt: BatteryConfig) -> list:
    """Placement variables (one per candidate), then SOC boundaries by boundary and bus."""
    P = partition.n_periods
    probs = partition.probabilities
    total = sum(probs)
    out = [FirstStageVar(f"x[{n}]", PLACEMENT, n, None, tuple(range(P)),
                         tuple(p / total for p in probs), 0.0, batt.x_max)
           for n in candidates]
    lo, hi = batt.soc_bounds()
    for p in range(P - 1):
        pair = probs[p] + probs[p + 1]
        for n in candidates:
            out.append(FirstStageVar(f"E[{n}]@{p}", SOC, n, p, (p, p + 1),
                                     (probs[p] / pair, probs[p + 1] / pair), lo, hi))
    return out


@dataclass(frozen=True)
class ScenarioView:
    """First-stage variables owned by one scenario and where they live in its LP."""

    var_idx: np.ndarray
    cols: np.ndarray
    weights: np.ndarray


def scenario_layout_for(fsv, sub, s) -> ScenarioView:
    cpos = {n: i for i, n in enumerate(sub.candidates)}
    idx, cols, wts = [], [], []
    for k, v in enumerate(fsv):
        if s not in v.owners:
            continue
        i = cpos[v.bus]
        if v.kind == PLACEMENT:
            col = sub.placement_cols[i]
        elif v.boundary == s:
            col = sub.last_soc_cols[i]
        else:
            col = sub.boundary_cols[i]
        idx.append(k)
        cols.append(col)
        wts.append(v.weights[v.owners.index(s)])
    return ScenarioView(np.array(idx, dtype=np.int64), np.array(cols, dtype=np.int64),
                        np.array(wts, dtype=float))


def scenario_layout(fsv: list, subs: list) -> list:
    return [scenario_layout_for(fsv, sub, s) for s, sub in enumerate(subs)]


def aggregate(values, var: FirstStageVar) -> float:
    """Weighted mean over the owners; ``values`` maps owner scenario -> value."""
    missing = [s for s in var.owners if s not in values]
    if missing:
        raise KeyError(f"{var.id}: no value from scenario {missing[0]}")
    total = 0.0
    for s, p in zip(var.owners, var.weights):
        total += p * values[s]
    return total


def aggregate_all(xs: list, views: list, n_vars: int) -> np.ndarray:
    """Consensus for every variable, summing owners in scenario order."""
    xbar = np.zeros(n_vars)
    for x, view in zip(xs, views):
        xbar[view.var_idx] += view.weights * x
    return xbar


def price_update(w, x_s, xbar, rho):
    return np.asarray(w) + np.asarray(rho) * (np.asarray(x_s) - np.asarray(xbar))


def weight_imbalance(ws: list, views: list, n_vars: int) -> np.ndarray:
    """Per-variable sum over owners of weight * w_s (zero when prices are conserved)."""
    tot = np.zeros(n_vars)
    for w, view in zip(ws, views):
        tot[view.var_idx] += view.weights * w
    return tot


def _recenter(ws: list, views: list, n_vars: int) -> list:
    # removes floating-point drift so owner-weighted prices sum to zero
    imb = weight_imbalance(ws, views, n_vars)
    return [w - imb[v.var_idx] for w, v in zip(ws, views)]


def residual(xs: list, xbar: np.ndarray, views: list) -> float:
    """Weighted root-mean-square of x_s - xbar over all (variable, owner) pairs."""
    n_vars = len(xbar)
    if n_vars == 0:
        return 0.0
    acc = np.zeros(n_vars)
    for x, view in zip(xs, views):
        acc[view.var_idx] += view.weights * (x - xbar[view.var_idx]) ** 2
    return float(np.sqrt(np.sum(acc) / n_vars))


# ------------------------------------------------------------ augmentation

def cut_offsets(lo: float, hi: float, breakpoints: int, refine: int = 0,
                ratio: float = 2.0) -> np.ndarray:
    """Tangent points relative to xbar: +-k*w (k = 1..breakpoints), w = (hi-lo)/breakpoints.

    ``refine`` adds tangents at +-w/ratio**j (j = 1..refine) to shrink the
    flat zone of the outer approximation around xbar.  Between neighbouring
    refined tangents the approximation stays within a factor
    ``(1 + ratio)**2 / (4 * ratio)`` of the quadratic from below.
    """
    width = (hi - lo) / breakpoints
    if width <= 0:
        return np.zeros(0)
    ks = np.arange(1, breakpoints + 1, dtype=float) * width
    if refine:
        ks = np.concatenate([width / float(ratio) ** np.arange(refine, 0, -1), ks])
    return np.concatenate([-ks[::-1], ks])


class ProximalLP:
    """Subproblem LP plus an epigraph column and tangent cuts per first-stage variable.

    The matrix is fixed; only the objective (prices) and the cut right-hand
    sides (xbar) change between iterations, which keeps warm starts valid.
    Each cut at offset d reads ``q - rho*d*x >= -rho*d*xbar - rho*d*d/2``
    and ``q >= 0`` is the tangent at xbar itself.
    """

    def __init__(self, sub: PeriodSubproblem, cols, lo, hi, rho, breakpoints=8, refine=0,
                 refine_ratio=2.0):
        base = sub.lp
        self.base = base
        self.cols = np.asarray(cols, dtype=np.int64)
        self.rho = np.broadcast_to(np.asarray(rho, dtype=float), self.cols.shape).copy()
        lo = np.broadcast_to(np.asarray(lo, dtype=float), self.cols.shape)
        hi = np.broadcast_to(np.asarray(hi, dtype=float), self.cols.shape)
        n, m = base.num_cols, base.num_rows
        self.n0, self.m0 = n, m
        q_of, r_rows, r_cols, r_vals, offs, var_of = [], [], [], [], [], []
        nq = 0
        row = m
        for k, (j, r) in enumerate(zip(self.cols, self.rho)):
            if r <= 0:
                q_of.append(-1)
                continue
            d = cut_offsets(lo[k], hi[k], breakpoints, refine, refine_ratio)
            if len(d) == 0:
                q_of.append(-1)
                continue
            qj = n + nq
            nq += 1
            q_of.append(qj)
            for dd in d:
                r_rows += [row, row]
                r_cols += [qj, j]
                r_vals += [1.0, -r * dd]
                offs.append(dd)
                var_of.append(k)
                row += 1
        self.nq = nq
        self.q_cols = np.array(q_of, dtype=np.int64)
        self.offsets = np.array(offs, dtype=float)
        self.cut_var = np.array(var_of, dtype=np.int64)
        mc = len(offs)
        self.mc = mc
        rows = np.concatenate([base.rows, np.array(r_rows, dtype=np.int64)])
        cols_all = np.concatenate([base.cols, np.array(r_cols, dtype=np.int64)])
        vals = np.concatenate([base.vals, np.array(r_vals, dtype=float)])
        self.lp = StandardFormLP(
            c=np.concatenate([base.c, np.ones(nq)]), rows=rows, cols=cols_all, vals=vals,
            senses=list(base.senses) + ["G"] * mc, rhs=np.concatenate([base.rhs, np.zeros(mc)]),
            lb=np.concatenate([base.lb, np.zeros(nq)]), ub=np.concatenate([base.ub, np.full(nq, np.inf)]),
            col_names=list(base.col_names) + [f"prox_q{i}" for i in range(nq)],
            row_names=list(base.row_names) + [f"prox_cut{i}" for i in range(mc)],
            ranges=np.concatenate([base.ranges, np.full(mc, np.nan)]),
            obj_offset=base.obj_offset, name=base.name + "_prox")

    def build(self, w, xbar, prox=True) -> StandardFormLP:
        """LP for ``f + w.x (+ proximal cuts around xbar when prox)``."""
        w = np.asarray(w, dtype=float)
        xbar = np.asarray(xbar, dtype=float)
        if not (np.all(np.isfinite(w)) and np.all(np.isfinite(xbar))):
            raise PHError("non-finite prices or consensus values")
        c = self.lp.c.copy()
        np.add.at(c, self.cols, w)
        if not prox:
            c[self.n0:] = 0.0
        rhs = self.lp.rhs.copy()
        if self.mc:
            r = self.rho[self.cut_var]
            d = self.offsets
            rhs[self.m0:] = -r * d * xbar[self.cut_var] - 0.5 * r * d * d
        return self.lp.replace(c=c, rhs=rhs)

    def fixed(self, values) -> StandardFormLP:
        """Plain objective with the first-stage columns fixed to ``values``."""
        lp = self.build(np.zeros(len(self.cols)), values, prox=False)
        lb, ub = lp.lb.copy(), lp.ub.copy()
        lb[self.cols] = values
        ub[self.cols] = values
        return lp.replace(lb=lb, ub=ub)

    def extend_basis(self, basis):
        return basis.extend(self.n0, self.nq, self.mc)

    def penalty(self, x_first, xbar) -> float:
        """Value of the piecewise-linear proximal term at ``x_first``."""
        total = 0.0
        for k, qj in enumerate(self.q_cols):
            if qj < 0:
                continue
            sel = self.cut_var == k
            d = self.offsets[sel]
            r = self.rho[k]
            vals = r * d * (x_first[k] - xbar[k]) - 0.5 * r * d * d
            total += max(0.0, float(np.max(vals)))
        return total


def augment_subproblem(sub: PeriodSubproblem, w_s, xbar, rho, breakpoints=8, cols=None,
                       refine=0, refine_ratio=2.0) -> StandardFormLP:
    """Augmented LP for one subproblem; first-stage columns default to ``sub.first_stage_columns``.

    The cut range of each variable is its column bound interval.
    """
    cols = sub.first_stage_columns if cols is None else np.asarray(cols, dtype=np.int64)
    lo, hi = sub.lp.lb[cols], sub.lp.ub[cols]
    return ProximalLP(sub, cols, lo, hi, rho, breakpoints, refine, refine_ratio).build(w_s, xbar)


# ------------------------------------------------------------------ state

@dataclass
class PHOptions:
    rho: float = 0.001
    rho_soc: Optional[float] = None
    max_iters: int = 200
    tol: float = 1e-4
    breakpoints: int = 8
    refine: int = 0
    refine_ratio: float = 2.0
    incumbent_every: int = 1
    gap_target: Optional[float] = None
    placement_tol: float = 1e-3
    soc_tol: float = 1e-4
    workers: int = 1
    policy: str = "sync"
    solver: SolverOptions = field(default_factory=SolverOptions)
    incumbent_tol: float = 1e-6

    def __post_init__(self):
        if self.rho < 0 or (self.rho_soc is not None and self.rho_soc < 0):
            raise ValueError("rho must be >= 0")
        if self.tol <= 0:
            raise ValueError("tol must be > 0")
        if self.breakpoints < 1:
            raise ValueError("breakpoints must be >= 1")
        if self.refine < 0 or self.refine_ratio <= 1.0:
            raise ValueError("refine must be >= 0 and refine_ratio > 1")
        if self.incumbent_every < 1:
            raise ValueError("incumbent_every must be >= 1")
        if self.max_iters < 0:
            raise ValueError("max_iters must be >= 0")
        if self.gap_target is not None and self.gap_target < 0:
            raise ValueError("gap_target must be >= 0")


@dataclass
class PHState:
    iteration: int
    w: list
    xbar: np.ndarray
    x_last: list
    rho: np.ndarray
    residual: float = float("inf")
    lb_history: list = field(default_factory=list)
    ub_history: list = field(default_factory=list)
    best_lb: float = -float("inf")
    best_ub: float = float("inf")
    best_first_stage: Optional[np.ndarray] = None

    def to_json(self) -> dict:
        def arr(a):
            return None if a is None else [float(v) for v in a]
        return {
            "iteration": self.iteration,
            "w": [arr(w) for w in self.w],
            "xbar": arr(self.xbar),
            "x_last": [arr(x) for x in self.x_last],
            "rho": arr(self.rho),
            "residual": self.residual,
            "lb_history": self.lb_history,
            "ub_history": self.ub_history,
            "best_lb": self.best_lb,
            "best_ub": self.best_ub,
            "best_first_stage": arr(self.best_first_stage),
        }

    @staticmethod
    def from_json(doc: dict) -> "PHState":
        def arr(a):
            return None if a is None else np.array(a, dtype=float)
        return PHState(
            iteration=int(doc["iteration"]), w=[arr(w) for w in doc["w"]], xbar=arr(doc["xbar"]),
            x_last=[arr(x) for x in doc["x_last"]], rho=arr(doc["rho"]),
            residual=float(doc["residual"]), lb_history=list(doc["lb_history"]),
            ub_history=list(doc["ub_history"]), best_lb=float(doc["best_lb"]),
            best_ub=float(doc["best_ub"]), best_first_stage=arr(doc.get("best_first_stage")))

    def save(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_json(), fh)
            fh.write("\n")

    @staticmethod
    def load(path) -> "PHState":
        with open(path, encoding="utf-8") as fh:
            return PHState.from_json(json.load(fh))


@dataclass
class PHResult:
    solution: Optional[PlanningSolution]
    ub: float
    lb: float
    gap: float
    trace: list
    iterations: int
    wall_seconds: float
    converged: bool
    residual: float
    state: PHState
    first_stage: list
    placement_deviation: float
    soc_mismatch: float
    notes: list = field(default_factory=list)

    @property
    def abs_gap(self) -> float:
        return self.ub - self.lb


def relative_gap(lb, ub) -> float:
    if not np.isfinite(ub) or not np.isfinite(lb):
        return float("inf")
    return (ub - lb) / max(abs(ub), 1e-12)


def repair_first_stage(xbar: np.ndarray, fsv: list, batt: BatteryConfig) -> np.ndarray:
    """Clip placements to [0, x_max], scale them down to x_total, then clip SOC to [x*E_min, x*E_max]."""
    out = np.array(xbar, dtype=float)
    plc = [k for k, v in enumerate(fsv) if v.kind == PLACEMENT]
    out[plc] = np.clip(out[plc], 0.0, batt.x_max)
    tot = float(np.sum(out[plc]))
    if tot > batt.x_total:
        out[plc] *= batt.x_total / tot
        # guard against the product rounding just above the cap
        while float(np.sum(out[plc])) > batt.x_total:
            out[plc] = np.nextafter(out[plc], 0.0)
    xb = {fsv[k].bus: out[k] for k in plc}
    for k, v in enumerate(fsv):
        if v.kind == SOC:
            x = xb[v.bus]
            lo, hi = sorted((x * batt.e_min, x * batt.e_max))
            out[k] = min(max(out[k], lo), hi)
    return out


# ----------------------------------------------------------------- workers

@dataclass
class PHContext:
    net: Network
    slices: list
    batt: BatteryConfig
    cost: CostConfig
    fsv: list
    rho: np.ndarray
    breakpoints: int
    refine: int
    refine_ratio: float
    solver: SolverOptions


@dataclass
class PeriodResult:
    first: np.ndarray
    f: float
    x: np.ndarray
    lb_value: Optional[float] = None
    status: str = "optimal"


class PeriodWorker:
    """Owns the subproblems of some periods and their warm-start bases."""

    def __init__(self, ctx: PHContext, periods):
        self.ctx = ctx
        self.subs, self.prox, self.bases = {}, {}, {}
        subs = {s: build_period_lp(ctx.net, ctx.slices[s], ctx.batt, ctx.cost, name=f"period{s}")
                for s in periods}
        for s, sub in subs.items():
            view = scenario_layout_for(ctx.fsv, sub, s)
            self.subs[s] = (sub, view)
            lo = np.array([ctx.fsv[k].lo for k in view.var_idx])
            hi = np.array([ctx.fsv[k].hi for k in view.var_idx])
            self.prox[s] = ProximalLP(sub, view.cols, lo, hi, ctx.rho[view.var_idx],
                                      ctx.breakpoints, ctx.refine, ctx.refine_ratio)

    def _solve(self, s, kind, lp, seed_kind=None, extend=False):
        key = (s, kind)
        basis = self.bases.get(key)
        if basis is None and seed_kind is not None:
            seed = self.bases.get((s, seed_kind))
            if seed is not None:
                basis = self.prox[s].extend_basis(seed) if extend else seed
        sol = warm_solve(lp, basis, self.ctx.solver) if basis is not None else solve_lp(lp, self.ctx.solver)
        if sol.status != LPStatus.OPTIMAL:
            raise SubproblemFailure(s, sol.status.value, kind)
        self.bases[key] = sol.basis
        return sol

    def __call__(self, s, task):
        sub, view = self.subs[s]
        base = sub.lp
        kind = task[0]
        if kind == "plain":
            sol = self._solve(s, "plain", base)
            x = sol.x
            return PeriodResult(x[view.cols].copy(), sol.objective, x.copy(), sol.objective)
        if kind == "ph":
            _, w, xbar = task
            pl = self.prox[s]
            sol = self._solve(s, "ph", pl.build(w, xbar), seed_kind="plain", extend=True)
            x = sol.x[:pl.n0]
            f = base.objective(x)
            lbsol = warm_solve(pl.build(w, xbar, prox=False), sol.basis, self.ctx.solver)
            if lbsol.status != LPStatus.OPTIMAL:
                raise SubproblemFailure(s, lbsol.status.value, "lower-bound")
            return PeriodResult(x[view.cols].copy(), f, x.copy(), lbsol.objective)
        if kind == "inc":
            _, values = task
            pl = self.prox[s]
            sol = self._solve(s, "inc", pl.fixed(values))
            x = sol.x[:pl.n0]
            return PeriodResult(x[view.cols].copy(), base.objective(x), x.copy())
        raise ValueError(f"unknown task {kind!r}")


class _WorkerFactory:
    def __init__(self, ctx):
        self.ctx = ctx

    def __call__(self, periods):
        return PeriodWorker(self.ctx, periods)


# ------------------------------------------------------------------ driver

def _rho_vector(fsv, opts: PHOptions) -> np.ndarray:
    rs = opts.rho if opts.rho_soc is None else opts.rho_soc
    return np.array([opts.rho if v.kind == PLACEMENT else rs for v in fsv], dtype=float)


def _exact_consensus(xs, views, n_vars):
    """Common value per variable if every owner agrees bitwise, else None."""
    ref = np.full(n_vars, np.nan)
    for x, view in zip(xs, views):
        cur = ref[view.var_idx]
        unset = np.isnan(cur)
        if np.any(~unset & (cur != x)):
            return None
        ref[view.var_idx] = np.where(unset, x, cur)
    return ref


class _Incumbent:
    def __init__(self):
        self.ub = float("inf")
        self.solution = None
        self.first_stage = None
        self.iteration = None


def run_ph(net: Network, partition: ScenarioPartition, batt: BatteryConfig, cost: CostConfig,
           schedule: DeenergizationSchedule, demand: np.ndarray, opts: Optional[PHOptions] = None,
           resume: Optional[PHState] = None, on_iteration: Optional[Callable] = None,
           checkpoint: Optional[str] = None) -> PHResult:
    """Progressive hedging over the periods of ``partition``.

    Iteration 0 solves every period without prices or proximal terms.  Each
    later iteration updates prices from the previous iterates, re-solves
    the augmented periods, evaluates the Lagrangian bound, forms the new
    consensus and (on cadence) an incumbent.  Stops when the residual is at
    most ``opts.tol``, when ``opts.gap_target`` is set and the gap, placement
    deviation and SOC owner mismatch are all within tolerance, or after
    ``opts.max_iters`` iterations.
    """
    opts = opts or PHOptions()
    t_start = time.perf_counter()
    if demand.shape[1] < partition.horizon:
        raise PHError("demand does not cover the partition horizon")
    slices = partition.slices(demand, schedule)
    subs = [build_period_lp(net, slc, batt, cost, name=f"period{s}") for s, slc in enumerate(slices)]
    fsv = build_first_stage(partition, subs[0].candidates, batt)
    views = scenario_layout(fsv, subs)
    nv = len(fsv)
    rho = _rho_vector(fsv, opts)
    ctx = PHContext(net, slices, batt, cost, fsv, rho, opts.breakpoints, opts.refine,
                    opts.refine_ratio, opts.solver)
    P = partition.n_periods
    plan = WorkPlan.blocks(P, opts.workers, opts.policy)
    async_inc = opts.policy == "async-incumbent"
    if async_inc:
        solve_plan, inc_plan = plan.split_for_async()
    else:
        solve_plan, inc_plan = plan, None

    trace, notes = [], []
    inc = _Incumbent()
    factory = _WorkerFactory(ctx)
    solve_pool = WorkerPool(solve_plan, factory)
    inc_pool = WorkerPool(inc_plan, factory) if async_inc and opts.workers > 1 else None
    pending = None  # (iteration, first-stage values) of an incumbent in flight

    def run_round(tasks):
        try:
            return solve_pool.run(tasks)
        except Exception as exc:
            raise _as_failure(exc) from exc

    def finish_incumbent(v_from, values, results):
        ub = ordered_sum(r.f for r in results)
        parts = [solution_from_lp(subs[s], results[s].x, net, batt) for s in range(P)]
        sol = stitch(parts, placement=_placement_of(values, fsv))
        rep = check_feasibility(sol, net, batt, cost, schedule, demand, tol=opts.incumbent_tol)
        if not rep.ok:
            notes.append(f"iteration {v_from}: incumbent rejected by the verifier ({len(rep.violations)} violations)")
            return
        if ub < inc.ub:
            sol.cost = evaluate_cost(sol, net, cost)
            inc.ub, inc.solution, inc.first_stage, inc.iteration = ub, sol, values.copy(), v_from

    def inc_tasks(values):
        return {s: ("inc", values[views[s].var_idx]) for s in range(P)}

    def incumbent_sync(v, values):
        try:
            res = (inc_pool or solve_pool).run(inc_tasks(values))
        except Exception as exc:
            notes.append(f"iteration {v}: incumbent failed ({_as_failure(exc)})")
            return
        finish_incumbent(v, values, res)

    def merge_pending():
        nonlocal pending
        if pending is None:
            return
        v_from, values = pending
        pending = None
        try:
            res = inc_pool.gather() if inc_pool is not None else _deferred.pop()
        except Exception as exc:
            notes.append(f"iteration {v_from}: incumbent failed ({_as_failure(exc)})")
            return
        finish_incumbent(v_from, values, res)

    _deferred = []

    def incumbent_step(v, xs, fs, xfull):
        nonlocal pending
        common = _exact_consensus(xs, views, nv)
        if common is not None:
            ub = ordered_sum(fs)
            if ub < inc.ub:
                parts = [solution_from_lp(subs[s], xfull[s], net, batt) for s in range(P)]
                sol = stitch(parts, placement=_placement_of(common, fsv))
                rep = check_feasibility(sol, net, batt, cost, schedule, demand, tol=opts.incumbent_tol)
                if rep.ok:
                    sol.cost = evaluate_cost(sol, net, cost)
                    inc.ub, inc.solution, inc.first_stage, inc.iteration = ub, sol, common.copy(), v
                    return
        values = repair_first_stage(state.xbar, fsv, batt)
        if async_inc:
            merge_pending()
            pending = (v, values)
            if inc_pool is not None:
                inc_pool.submit(inc_tasks(values))
            else:
                # single worker: compute now, merge at the next barrier like the pooled path
                try:
                    _deferred.append(solve_pool.run(inc_tasks(values)))
                except Exception as exc:
                    pending = None
                    notes.append(f"iteration {v}: incumbent failed ({_as_failure(exc)})")
        else:
            incumbent_sync(v, values)

    try:
        if resume is None:
            t0 = time.perf_counter()
            res = run_round({s: ("plain",) for s in range(P)})
            solve_ms = 1000.0 * (time.perf_counter() - t0)
            xs = [r.first for r in res]
            fs = [r.f for r in res]
            xfull = [r.x for r in res]
            lb = ordered_sum(r.lb_value for r in res)
            xbar = aggregate_all(xs, views, nv)
            state = PHState(0, [np.zeros(len(v.var_idx)) for v in views], xbar, xs, rho)
            state.residual = residual(xs, xbar, views)
            state.lb_history.append(lb)
            state.best_lb = lb
            t1 = time.perf_counter()
            incumbent_step(0, xs, fs, xfull)
            inc_ms = 1000.0 * (time.perf_counter() - t1)
            state.ub_history.append(inc.ub)
            state.best_ub = inc.ub
            _record(trace, state, t_start, solve_ms, inc_ms, xs, views, fsv, lb, on_iteration)
        else:
            state = resume
            if len(state.w) != P or len(state.xbar) != nv:
                raise PHError("checkpoint does not match this partition")
            state.rho = rho
            if state.best_first_stage is not None:
                incumbent_sync(state.iteration, state.best_first_stage)
            xs = state.x_last

        def settled():
            if state.residual <= opts.tol:
                return True
            if opts.gap_target is None or not trace:
                return False
            rec = trace[-1]
            return (rec["gap"] is not None and rec["gap"] <= opts.gap_target
                    and rec["placement_dev"] <= opts.placement_tol
                    and rec["soc_mismatch"] <= opts.soc_tol)

        while not settled() and state.iteration < opts.max_iters:
            v = state.iteration + 1
            ws = [price_update(state.w[s], xs[s], state.xbar[views[s].var_idx], rho[views[s].var_idx])
                  for s in range(P)]
            ws = _recenter(ws, views, nv)
            t0 = time.perf_counter()
            res = run_round({s: ("ph", ws[s], state.xbar[views[s].var_idx]) for s in range(P)})
            solve_ms = 1000.0 * (time.perf_counter() - t0)
            xs = [r.first for r in res]
            fs = [r.f for r in res]
            xfull = [r.x for r in res]
            lb = ordered_sum(r.lb_value for r in res)
            state.iteration = v
            state.w = ws
            state.x_last = xs
            state.xbar = aggregate_all(xs, views, nv)
            state.residual = residual(xs, state.xbar, views)
            state.lb_history.append(lb)
            state.best_lb = max(state.best_lb, lb)
            t1 = time.perf_counter()
            if async_inc:
                merge_pending()
            done = state.residual <= opts.tol or v >= opts.max_iters
            if v % opts.incumbent_every == 0 or done or opts.gap_target is not None:
                incumbent_step(v, xs, fs, xfull)
            inc_ms = 1000.0 * (time.perf_counter() - t1)
            state.ub_history.append(inc.ub)
            state.best_ub = inc.ub
            state.best_first_stage = inc.first_stage
            _record(trace, state, t_start, solve_ms, inc_ms, xs, views, fsv, lb, on_iteration)
            if checkpoint:
                state.save(checkpoint)

        if async_inc:
            merge_pending()
            state.best_ub = inc.ub
            if trace:
                trace[-1]["UB"] = _num(inc.ub)
                trace[-1]["gap"] = _num(relative_gap(state.best_lb, inc.ub))
        if inc.solution is None and not np.isfinite(inc.ub):
            incumbent_sync(state.iteration, repair_first_stage(state.xbar, fsv, batt))
            state.best_ub = inc.ub
        state.best_first_stage = inc.first_stage
        if checkpoint:
            state.save(checkpoint)
    finally:
        solve_pool.close()
        if inc_pool is not None:
            inc_pool.close()

    dev, mism = consensus_metrics(state.x_last, state.xbar, views, fsv)
    gap = relative_gap(state.best_lb, inc.ub)
    converged = state.residual <= opts.tol or (
        opts.gap_target is not None and gap <= opts.gap_target
        and dev <= opts.placement_tol and mism <= opts.soc_tol)
    return PHResult(solution=inc.solution, ub=inc.ub, lb=state.best_lb,
                    gap=gap, trace=trace,
                    iterations=state.iteration, wall_seconds=time.perf_counter() - t_start,
                    converged=converged, residual=state.residual, state=state,
                    first_stage=fsv, placement_deviation=dev, soc_mismatch=mism, notes=notes)


def consensus_metrics(xs, xbar, views, fsv):
    """(max |x_s - xbar| over placement owners, max owner disagreement on SOC boundaries)."""
    dev, mism = 0.0, 0.0
    vals = {}
    for s, (x, view) in enumerate(zip(xs, views)):
        for k, val in zip(view.var_idx, x):
            if fsv[k].kind == PLACEMENT:
                dev = max(dev, abs(val - xbar[k]))
            else:
                vals.setdefault(k, []).append(val)
    for k, owned in vals.items():
        mism = max(mism, max(owned) - min(owned))
    return float(dev), float(mism)


def _placement_of(values, fsv):
    return np.array([values[k] for k, v in enumerate(fsv) if v.kind == PLACEMENT])


def _num(v):
    return float(v) if np.isfinite(v) else None


def _record(trace, state, t_start, solve_ms, inc_ms, xs, views, fsv, lb_iter, callback):
    lb, ub = state.best_lb, state.best_ub
    dev, mism = consensus_metrics(xs, state.xbar, views, fsv)
    imb = weight_imbalance(state.w, views, len(state.xbar))
    rec = {"v": state.iteration, "residual": state.residual, "LB": _num(lb), "UB": _num(ub),
           "gap": _num(relative_gap(lb, ub)), "LB_iter": _num(lb_iter),
           "placement_dev": dev, "soc_mismatch": mism,
           "weight_imbalance": float(np.max(np.abs(imb))) if len(imb) else 0.0,
           "wall_ms": 1000.0 * (time.perf_counter() - t_start),
           "timing": {"solve_ms": solve_ms, "incumbent_ms": inc_ms}}
    trace.append(rec)
    if callback is not None:
        callback(rec)


def _as_failure(exc):
    from .runtime import WorkerError
    if isinstance(exc, SubproblemFailure):
        return exc
    if isinstance(exc, WorkerError):
        return SubproblemFailure(exc.period, "error", str(exc).splitlines()[0])
    return exc


TIMING_KEYS = ("wall_ms", "timing")


def trace_without_timing(trace):
    return [{k: v for k, v in rec.items() if k not in TIMING_KEYS} for rec in trace]

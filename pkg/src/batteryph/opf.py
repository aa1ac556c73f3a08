"""Compile blocks of hours into bounded-variable LPs (DC-OPF + batteries).

Column layout of a period LP: placements x[n], then (when the period has a
left boundary) the carried-in state of charge E[n, t0-1], then one block per
hour holding p_g, g_slack, theta, p_ls, flow, p_c, p_d, E in that order.

Rows are ordered by constraint family, then hour, then entity:

    angle_limit       angle-difference range rows (lines with zero susceptance)
    flow_definition   p + b*theta_fr - b*theta_to = 0 on energized lines
    placement_total   sum of placements <= X_total
    soc_balance       E_t - h*E_{t-1} - e*p_c + p_d/e = 0 (h*E0 on the first hour)
    soc_limits        E - E_max*x <= 0, plus E - E_min*x >= 0 when E_min != 0
    charge_limits     p_c - rate_max*x <= 0, plus the lower row when rate_min != 0
    discharge_limits  same for p_d
    power_balance     nodal balance
    terminal_soc      optional E_T >= E0

Generator limits, shed limits, slack limits, shut-off lines (p = 0), thermal
limits and placement caps are column bounds.  For lines with nonzero
susceptance the angle-difference limit is folded into the flow bounds, which
is exact because the flow is tied to the angle difference by its definition
row.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .lp import StandardFormLP
from .network import DeenergizationSchedule, Network, NetworkError

TWO_PI = 2.0 * math.pi


class ModelError(ValueError):
    pass


class HorizonTooLong(ModelError):
    pass


@dataclass(frozen=True)
class BatteryConfig:
    e_min: float = 0.0
    e_max: float = 1.0
    p_rate_min: float = 0.0
    p_rate_max: float = 1.0
    efficiency: float = 0.95
    carryover: float = 0.999958
    x_max: float = 4.0
    x_total: float = 10.0
    e_initial: object = 0.0
    integer_placement: bool = False
    soc_end_ge_start: bool = False

    def __post_init__(self):
        if self.e_min > self.e_max:
            raise ModelError("e_min exceeds e_max")
        if self.p_rate_min > self.p_rate_max:
            raise ModelError("p_rate_min exceeds p_rate_max")
        if not 0 < self.efficiency <= 1:
            raise ModelError("efficiency must be in (0, 1]")
        if not 0 < self.carryover <= 1:
            raise ModelError("carryover must be in (0, 1]")
        if self.x_max < 0 or self.x_total < 0:
            raise ModelError("battery caps must be >= 0")
        if self.x_max > self.x_total:
            raise ModelError("x_max exceeds x_total")

    def initial_soc(self, bus_id) -> float:
        if isinstance(self.e_initial, dict):
            return float(self.e_initial.get(bus_id, 0.0))
        return float(self.e_initial)

    def soc_bounds(self):
        """Column bounds implied on any SOC variable by the placement cap."""
        return min(0.0, self.x_max * self.e_min), max(0.0, self.x_max * self.e_max)


@dataclass(frozen=True)
class CostConfig:
    k_ls: float = 20000.0
    k_slack: Optional[float] = None
    slack_upper: float = 10000.0

    def __post_init__(self):
        if self.k_slack is None:
            object.__setattr__(self, "k_slack", 50.0 * self.k_ls)
        if self.k_ls <= 0:
            raise ModelError("k_ls must be > 0")
        if self.k_slack < self.k_ls:
            raise ModelError("k_slack must be >= k_ls")
        if self.slack_upper < 0:
            raise ModelError("slack_upper must be >= 0")


@dataclass(frozen=True)
class PeriodSlice:
    """Contiguous hours with their demand (bus x hour) and shut-off sets."""

    hours: tuple
    demand: np.ndarray
    off_sets: tuple
    has_left_boundary: bool = False
    closes_horizon: bool = True

    def __post_init__(self):
        if not self.hours:
            raise ModelError("empty slice")
        h = self.hours
        if any(b - a != 1 for a, b in zip(h, h[1:])):
            raise ModelError("slice hours must be contiguous")
        if self.demand.shape[1] != len(h) or len(self.off_sets) != len(h):
            raise ModelError("slice data does not cover its hours")

    @staticmethod
    def build(hours, demand_full: np.ndarray, schedule: DeenergizationSchedule,
              has_left_boundary=False, closes_horizon=True) -> "PeriodSlice":
        hours = tuple(int(t) for t in hours)
        if hours and hours[-1] >= demand_full.shape[1]:
            raise ModelError(f"hour {hours[-1]} beyond the demand horizon ({demand_full.shape[1]} h)")
        dem = demand_full[:, hours[0]:hours[-1] + 1] if hours else np.zeros((demand_full.shape[0], 0))
        return PeriodSlice(hours, dem, tuple(schedule.off(t) for t in hours),
                           has_left_boundary, closes_horizon)


@dataclass
class PeriodSubproblem:
    lp: StandardFormLP
    slice: PeriodSlice
    blocks: dict
    placement_cols: np.ndarray
    boundary_cols: Optional[np.ndarray]
    row_families: dict
    candidates: tuple
    ids: dict = field(default_factory=dict)
    first_stage_columns: np.ndarray = field(init=False)

    def __post_init__(self):
        cols = [self.placement_cols]
        if self.boundary_cols is not None:
            cols.append(self.boundary_cols)
        self.first_stage_columns = np.concatenate(cols).astype(np.int64)

    @property
    def last_soc_cols(self) -> np.ndarray:
        """SOC columns at the final hour of the slice (the right boundary)."""
        return self.blocks["E"][:, -1]

    @property
    def varmap(self) -> dict:
        """symbol -> column; keys like ("p_g", gen_id, hour) or ("x", bus_id)."""
        out = {("x", n): int(c) for n, c in zip(self.candidates, self.placement_cols)}
        t0 = self.slice.hours[0]
        if self.boundary_cols is not None:
            for n, c in zip(self.candidates, self.boundary_cols):
                out[("E", n, t0 - 1)] = int(c)
        for name, (ids, arr) in self.blocks_with_ids.items():
            for i, ent in enumerate(ids):
                for k, t in enumerate(self.slice.hours):
                    out[(name, ent, t)] = int(arr[i, k])
        return out

    @property
    def blocks_with_ids(self):
        return {k: (self.ids[k], v) for k, v in self.blocks.items()}


def _cost_terms(gen):
    cc = gen.cost_coeffs
    if len(cc) > 2 and any(c != 0 for c in cc[2:]):
        raise ModelError(f"generator {gen.id!r}: nonzero cost terms beyond linear are not supported in LP mode")
    c0 = cc[0]
    c1 = cc[1] if len(cc) > 1 else 0.0
    return c0, c1


def flow_bounds(line, energized=True):
    if not energized:
        return 0.0, 0.0
    lo, hi = -line.flow_limit, line.flow_limit
    b = line.susceptance
    if b != 0.0:
        a1, a2 = -b * line.angle_diff_min, -b * line.angle_diff_max
        lo, hi = max(lo, min(a1, a2)), min(hi, max(a1, a2))
        if lo > hi:
            raise ModelError(f"line {line.id!r}: thermal and angle limits are incompatible")
    return lo, hi


class _Builder:
    def __init__(self):
        self.c, self.lb, self.ub, self.cnames = [], [], [], []
        self.rows, self.cols, self.vals = [], [], []
        self.senses, self.rhs, self.ranges, self.rnames = [], [], [], []

    def col(self, name, lo, hi, cost=0.0):
        self.c.append(cost)
        self.lb.append(lo)
        self.ub.append(hi)
        self.cnames.append(name)
        return len(self.c) - 1

    def row(self, name, terms, sense, rhs, rng=np.nan):
        i = len(self.rhs)
        for j, v in terms:
            if v != 0.0:
                self.rows.append(i)
                self.cols.append(j)
                self.vals.append(v)
        self.senses.append(sense)
        self.rhs.append(rhs)
        self.ranges.append(rng)
        self.rnames.append(name)
        return i

    def lp(self, name, offset):
        return StandardFormLP(c=self.c, rows=self.rows, cols=self.cols, vals=self.vals,
                              senses=self.senses, rhs=self.rhs, lb=self.lb, ub=self.ub,
                              col_names=self.cnames, row_names=self.rnames,
                              ranges=self.ranges, obj_offset=offset, name=name)


def build_period_lp(net: Network, slc: PeriodSlice, batt: Optional[BatteryConfig],
                    cost: CostConfig, schedule: Optional[DeenergizationSchedule] = None,
                    name="period") -> PeriodSubproblem:
    """Compile one slice of hours into an LP; ``batt=None`` omits storage entirely."""
    off_sets = slc.off_sets if schedule is None else tuple(schedule.off(t) for t in slc.hours)
    for t, s in zip(slc.hours, off_sets):
        for lid in s:
            if lid not in net.line_index:
                raise NetworkError(f"hour {t}: shut-off set names unknown line {lid!r}")
    if slc.demand.shape[0] != len(net.buses):
        raise ModelError("slice demand rows do not match the bus count")

    gens, buses, lines = net.generators, net.buses, net.lines
    cands = net.candidates if batt is not None else ()
    nc = len(cands)
    T = len(slc.hours)
    bidx = net.bus_index
    gterms = [_cost_terms(g) for g in gens]
    bld = _Builder()

    xcols = np.array([bld.col(f"x[{n}]", 0.0, batt.x_max) for n in cands], dtype=np.int64)
    bcols = None
    soc_lo, soc_hi = batt.soc_bounds() if batt is not None else (0.0, 0.0)
    t0 = slc.hours[0]
    if batt is not None and slc.has_left_boundary:
        bcols = np.array([bld.col(f"E[{n},{t0 - 1}]", soc_lo, soc_hi) for n in cands], dtype=np.int64)

    G, N, L = len(gens), len(buses), len(lines)
    blk = {k: np.zeros((size, T), dtype=np.int64) for k, size in
           (("p_g", G), ("g_slack", N), ("theta", N), ("p_ls", N), ("flow", L),
            ("p_c", nc), ("p_d", nc), ("E", nc))}
    ref = bidx[net.reference_bus]
    pc_hi = max(0.0, batt.x_max * batt.p_rate_max) if batt else 0.0
    pc_lo = min(0.0, batt.x_max * batt.p_rate_min) if batt else 0.0
    for k, t in enumerate(slc.hours):
        off = off_sets[k]
        for i, g in enumerate(gens):
            blk["p_g"][i, k] = bld.col(f"pg[{g.id},{t}]", g.g_min, g.g_max, gterms[i][1])
        for i, b in enumerate(buses):
            blk["g_slack"][i, k] = bld.col(f"gs[{b.id},{t}]", 0.0, cost.slack_upper, cost.k_slack)
        for i, b in enumerate(buses):
            lo, hi = (0.0, 0.0) if i == ref else (-TWO_PI, TWO_PI)
            blk["theta"][i, k] = bld.col(f"th[{b.id},{t}]", lo, hi)
        for i, b in enumerate(buses):
            blk["p_ls"][i, k] = bld.col(f"ls[{b.id},{t}]", 0.0, float(slc.demand[i, k]), cost.k_ls)
        for i, ln in enumerate(lines):
            lo, hi = flow_bounds(ln, ln.id not in off)
            blk["flow"][i, k] = bld.col(f"pf[{ln.id},{t}]", lo, hi)
        for i, n in enumerate(cands):
            blk["p_c"][i, k] = bld.col(f"pc[{n},{t}]", pc_lo, pc_hi)
        for i, n in enumerate(cands):
            blk["p_d"][i, k] = bld.col(f"pd[{n},{t}]", pc_lo, pc_hi)
        for i, n in enumerate(cands):
            blk["E"][i, k] = bld.col(f"E[{n},{t}]", soc_lo, soc_hi)

    fam = {}

    def family(key, start):
        fam[key] = (start, len(bld.rhs))

    s = len(bld.rhs)
    for k, t in enumerate(slc.hours):
        for i, ln in enumerate(lines):
            if ln.id in off_sets[k] or ln.susceptance != 0.0:
                continue
            f, to = bidx[ln.from_bus], bidx[ln.to_bus]
            bld.row(f"ang[{ln.id},{t}]", [(blk["theta"][f, k], 1.0), (blk["theta"][to, k], -1.0)],
                    "G", ln.angle_diff_min, ln.angle_diff_max - ln.angle_diff_min)
    family("angle_limit", s)
    s = len(bld.rhs)
    for k, t in enumerate(slc.hours):
        for i, ln in enumerate(lines):
            if ln.id in off_sets[k] or ln.susceptance == 0.0:
                continue
            f, to = bidx[ln.from_bus], bidx[ln.to_bus]
            b = ln.susceptance
            bld.row(f"flow[{ln.id},{t}]", [(blk["flow"][i, k], 1.0), (blk["theta"][f, k], b),
                                           (blk["theta"][to, k], -b)], "E", 0.0)
    family("flow_definition", s)

    if batt is not None and nc:
        h, e = batt.carryover, batt.efficiency
        s = len(bld.rhs)
        bld.row("xtotal", [(c, 1.0) for c in xcols], "L", batt.x_total)
        family("placement_total", s)
        s = len(bld.rhs)
        for k, t in enumerate(slc.hours):
            for i, n in enumerate(cands):
                terms = [(blk["E"][i, k], 1.0), (blk["p_c"][i, k], -e), (blk["p_d"][i, k], 1.0 / e)]
                rhs = 0.0
                if k > 0:
                    terms.append((blk["E"][i, k - 1], -h))
                elif bcols is not None:
                    terms.append((bcols[i], -h))
                else:
                    rhs = h * batt.initial_soc(n)
                bld.row(f"soc[{n},{t}]", terms, "E", rhs)
        family("soc_balance", s)
        s = len(bld.rhs)
        # the carried-in SOC column is only boxed by its bounds; its x*E limits
        # are enforced in the period that owns that hour
        soc_cols = []
        for k, t in enumerate(slc.hours):
            soc_cols += [(blk["E"][i, k], t, n) for i, n in enumerate(cands)]
        ci = {n: i for i, n in enumerate(cands)}
        for col, t, n in soc_cols:
            bld.row(f"emax[{n},{t}]", [(col, 1.0), (xcols[ci[n]], -batt.e_max)], "L", 0.0)
            if batt.e_min != 0.0:
                bld.row(f"emin[{n},{t}]", [(col, 1.0), (xcols[ci[n]], -batt.e_min)], "G", 0.0)
        family("soc_limits", s)
        for key, tag in (("p_c", "charge_limits"), ("p_d", "discharge_limits")):
            s = len(bld.rhs)
            for k, t in enumerate(slc.hours):
                for i, n in enumerate(cands):
                    col = blk[key][i, k]
                    bld.row(f"{key}max[{n},{t}]", [(col, 1.0), (xcols[i], -batt.p_rate_max)], "L", 0.0)
                    if batt.p_rate_min != 0.0:
                        bld.row(f"{key}min[{n},{t}]", [(col, 1.0), (xcols[i], -batt.p_rate_min)], "G", 0.0)
            family(tag, s)

    s = len(bld.rhs)
    gens_at = [[] for _ in buses]
    for i, g in enumerate(gens):
        gens_at[bidx[g.bus]].append(i)
    lfrom = [[] for _ in buses]
    lto = [[] for _ in buses]
    for i, ln in enumerate(lines):
        lfrom[bidx[ln.from_bus]].append(i)
        lto[bidx[ln.to_bus]].append(i)
    cpos = {bidx[n]: i for i, n in enumerate(cands)}
    for k, t in enumerate(slc.hours):
        for i, b in enumerate(buses):
            terms = [(blk["flow"][l, k], 1.0) for l in lfrom[i]]
            terms += [(blk["flow"][l, k], -1.0) for l in lto[i]]
            terms += [(blk["p_g"][g, k], -1.0) for g in gens_at[i]]
            terms += [(blk["g_slack"][i, k], -1.0), (blk["p_ls"][i, k], -1.0)]
            if i in cpos:
                terms += [(blk["p_c"][cpos[i], k], 1.0), (blk["p_d"][cpos[i], k], -1.0)]
            bld.row(f"bal[{b.id},{t}]", terms, "E", -float(slc.demand[i, k]))
    family("power_balance", s)

    if batt is not None and nc and batt.soc_end_ge_start and slc.closes_horizon:
        s = len(bld.rhs)
        for i, n in enumerate(cands):
            bld.row(f"eend[{n}]", [(blk["E"][i, -1], 1.0)], "G", batt.initial_soc(n))
        family("terminal_soc", s)

    offset = float(T * sum(c0 for c0, _ in gterms))
    sub = PeriodSubproblem(lp=bld.lp(name, offset), slice=slc, blocks=blk, placement_cols=xcols,
                           boundary_cols=bcols, row_families=fam, candidates=tuple(cands),
                           ids={"p_g": [g.id for g in gens], "g_slack": [b.id for b in buses],
                "theta": [b.id for b in buses], "p_ls": [b.id for b in buses],
                "flow": [ln.id for ln in lines], "p_c": list(cands), "p_d": list(cands),
                "E": list(cands)})
    return sub


def expected_size(net: Network, slc: PeriodSlice, batt: Optional[BatteryConfig]):
    """Closed-form (columns, rows) of build_period_lp for this slice."""
    G, N, L = len(net.generators), len(net.buses), len(net.lines)
    C = len(net.candidates) if batt is not None else 0
    T = len(slc.hours)
    B = C if (batt is not None and slc.has_left_boundary) else 0
    cols = C + B + T * (G + 3 * N + L + 3 * C)
    energized = sum(len(net.lines) - len(s) for s in slc.off_sets)
    rows = energized + T * N
    if batt is not None and C:
        per_soc = 1 + (batt.e_min != 0.0)
        per_rate = 1 + (batt.p_rate_min != 0.0)
        rows += 1 + T * C + T * C * per_soc + 2 * T * C * per_rate
        if batt.soc_end_ge_start and slc.closes_horizon:
            rows += C
    return cols, rows


def build_extensive_form(net: Network, demand_full: np.ndarray, batt: Optional[BatteryConfig],
                         cost: CostConfig, schedule: DeenergizationSchedule,
                         hours: Optional[int] = None, hour_cap: int = 2000) -> PeriodSubproblem:
    """Whole-horizon LP with one placement vector and one SOC chain."""
    T = demand_full.shape[1] if hours is None else int(hours)
    if T > hour_cap:
        raise HorizonTooLong(f"horizon of {T} h exceeds the extensive-form cap of {hour_cap} h; use solve-ph")
    if T < 1:
        raise ModelError("empty horizon")
    slc = PeriodSlice.build(range(T), demand_full, schedule)
    return build_period_lp(net, slc, batt, cost, name="extensive_form")


def soc_trajectory(x, p_c, p_d, e_start, batt: BatteryConfig) -> np.ndarray:
    """SOC after each hour from E_{t+1} = h*E_t + e*p_c - p_d/e, seeded at ``e_start``.

    Arrays may be 1-D (one bus) or bus x hour.  ``x`` is accepted for
    signature symmetry; bounds are checked elsewhere.
    """
    pc = np.asarray(p_c, dtype=float)
    pd = np.asarray(p_d, dtype=float)
    if pc.shape != pd.shape:
        raise ValueError("charge and discharge series differ in shape")
    squeeze = pc.ndim == 1
    pc2 = pc.reshape(-1, pc.shape[-1])
    pd2 = pd.reshape(-1, pd.shape[-1])
    out = np.empty_like(pc2)
    prev = np.broadcast_to(np.asarray(e_start, dtype=float), (pc2.shape[0],)).copy()
    h, e = batt.carryover, batt.efficiency
    for t in range(pc2.shape[1]):
        prev = h * prev + e * pc2[:, t] - pd2[:, t] / e
        out[:, t] = prev
    return out[0] if squeeze else out

"""Planning solutions: extraction from LP points, costs, verification and I/O."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .network import DeenergizationSchedule, Network
from .opf import BatteryConfig, CostConfig, ModelError, PeriodSubproblem, soc_trajectory

SERIES = ("p_g", "g_slack", "theta", "p_ls", "flow", "p_c", "p_d", "soc")
# entity id list backing each series
_SERIES_IDS = {"p_g": "gen_ids", "g_slack": "bus_ids", "theta": "bus_ids", "p_ls": "bus_ids",
               "flow": "line_ids", "p_c": "candidates", "p_d": "candidates", "soc": "candidates"}


@dataclass(frozen=True)
class CostBreakdown:
    gen: float
    loadshed: float
    slack: float

    @property
    def total(self) -> float:
        return self.gen + self.loadshed + self.slack

    def to_dict(self) -> dict:
        return {"gen": self.gen, "loadshed": self.loadshed, "slack": self.slack, "total": self.total}


@dataclass
class PlanningSolution:
    """Placement plus entity x hour series starting at hour ``start``.

    ``soc[:, k]`` is the state of charge after hour ``start + k``;
    ``soc_start`` is the state before the first hour.
    """

    start: int
    bus_ids: tuple
    gen_ids: tuple
    line_ids: tuple
    candidates: tuple
    placement: np.ndarray
    soc_start: np.ndarray
    p_g: np.ndarray
    g_slack: np.ndarray
    theta: np.ndarray
    p_ls: np.ndarray
    flow: np.ndarray
    p_c: np.ndarray
    p_d: np.ndarray
    soc: np.ndarray
    cost: Optional[CostBreakdown] = None

    @property
    def hours(self) -> int:
        return self.p_g.shape[1] if self.p_g.ndim == 2 else self.theta.shape[1]

    def placement_dict(self) -> dict:
        return {n: float(v) for n, v in zip(self.candidates, self.placement)}


def solution_from_lp(sub: PeriodSubproblem, x: np.ndarray, net: Network,
                     batt: Optional[BatteryConfig] = None) -> PlanningSolution:
    """Read a PlanningSolution out of an LP point of ``sub``."""
    x = np.asarray(x, dtype=float)
    arrays = {}
    for name, key in (("p_g", "p_g"), ("g_slack", "g_slack"), ("theta", "theta"), ("p_ls", "p_ls"),
                      ("flow", "flow"), ("p_c", "p_c"), ("p_d", "p_d"), ("soc", "E")):
        arrays[name] = x[sub.blocks[key]]
    if sub.boundary_cols is not None:
        soc_start = x[sub.boundary_cols]
    elif batt is not None:
        soc_start = np.array([batt.initial_soc(n) for n in sub.candidates])
    else:
        soc_start = np.zeros(len(sub.candidates))
    return PlanningSolution(
        start=sub.slice.hours[0], bus_ids=tuple(b.id for b in net.buses),
        gen_ids=tuple(g.id for g in net.generators), line_ids=tuple(ln.id for ln in net.lines),
        candidates=tuple(sub.candidates), placement=x[sub.placement_cols].copy(),
        soc_start=np.asarray(soc_start, dtype=float).copy(), **arrays)


def stitch(parts, placement=None) -> PlanningSolution:
    """Concatenate consecutive period solutions into one horizon solution."""
    if not parts:
        raise ValueError("nothing to stitch")
    first = parts[0]
    for a, b in zip(parts, parts[1:]):
        if b.start != a.start + a.hours:
            raise ValueError(f"period starting at hour {b.start} does not follow hour {a.start + a.hours - 1}")
    arrays = {k: np.concatenate([getattr(p, k) for p in parts], axis=1) for k in SERIES}
    plc = first.placement if placement is None else np.asarray(placement, dtype=float)
    return PlanningSolution(first.start, first.bus_ids, first.gen_ids, first.line_ids,
                            first.candidates, plc.copy(), first.soc_start.copy(), **arrays)


def evaluate_cost(sol: PlanningSolution, net: Network, cost: CostConfig) -> CostBreakdown:
    """Generation, shed and slack costs summed over the solution's hours."""
    if sol.p_g.shape != (len(net.generators), sol.hours):
        raise ModelError("solution generator series does not match the network")
    gen = 0.0
    for i, g in enumerate(net.generators):
        cc = g.cost_coeffs
        if len(cc) > 3 and any(c != 0 for c in cc[3:]):
            raise ModelError(f"generator {g.id!r}: cost polynomial of degree > 2")
        p = sol.p_g[i]
        terms = sum(c * p ** j for j, c in enumerate(cc[:3]))
        gen += float(np.sum(np.broadcast_to(terms, p.shape)))
    loadshed = float(cost.k_ls * np.sum(sol.p_ls))
    slack = float(cost.k_slack * np.sum(sol.g_slack))
    return CostBreakdown(gen, loadshed, slack)


# ---------------------------------------------------------------- verification

@dataclass(frozen=True)
class Violation:
    constraint: str
    entity: str
    hour: Optional[int]
    amount: float

    def describe(self) -> str:
        where = f"{self.entity}" + (f" hour {self.hour}" if self.hour is not None else "")
        return f"{self.constraint}: {where} violated by {self.amount:.3g}"


@dataclass
class FeasibilityReport:
    violations: list = field(default_factory=list)
    simultaneous: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations

    def constraints(self) -> set:
        return {v.constraint for v in self.violations}

    def format(self, limit=50) -> str:
        lines = [v.describe() for v in self.violations[:limit]]
        if len(self.violations) > limit:
            lines.append(f"... {len(self.violations) - limit} more")
        if self.simultaneous:
            lines.append(f"note: simultaneous charge and discharge at {len(self.simultaneous)} bus-hours")
        if not self.violations:
            lines.insert(0, "feasible")
        return "\n".join(lines)


def check_feasibility(sol: PlanningSolution, net: Network, batt: Optional[BatteryConfig],
                      cost: CostConfig, schedule: DeenergizationSchedule, demand: np.ndarray,
                      tol: float = 1e-6) -> FeasibilityReport:
    """Check every model constraint independently of the LP builder.

    ``demand`` is the bus x hour matrix of the whole horizon (hours are
    indexed globally by ``sol.start``).  Each violation larger than ``tol``
    is reported with the constraint family, entity and hour.
    """
    rep = FeasibilityReport()
    T = sol.hours
    hrs = np.arange(sol.start, sol.start + T)
    if hrs[-1] >= demand.shape[1]:
        raise ModelError("solution extends past the demand horizon")
    dem = demand[:, sol.start:sol.start + T]

    def flag(name, ids, amount, per_hour=True):
        amount = np.atleast_1d(amount)
        bad = np.argwhere(amount > tol)
        for idx in bad:
            if per_hour:
                i, k = idx
                rep.violations.append(Violation(name, str(ids[i]), int(hrs[k]), float(amount[i, k])))
            else:
                rep.violations.append(Violation(name, str(ids[idx[0]]), None, float(amount[idx[0]])))

    gmin = np.array([g.g_min for g in net.generators])[:, None]
    gmax = np.array([g.g_max for g in net.generators])[:, None]
    flag("gen_limits", sol.gen_ids, np.maximum(gmin - sol.p_g, sol.p_g - gmax))
    flag("shed_limits", sol.bus_ids, np.maximum(-sol.p_ls, sol.p_ls - dem))
    flag("slack_limits", sol.bus_ids, np.maximum(-sol.g_slack, sol.g_slack - cost.slack_upper))
    ref = net.bus_index[net.reference_bus]
    flag("reference_angle", [net.reference_bus], np.abs(sol.theta[ref:ref + 1]))
    flag("angle_box", sol.bus_ids, np.abs(sol.theta) - 2 * np.pi)

    bidx = net.bus_index
    L = len(net.lines)
    fr = np.array([bidx[ln.from_bus] for ln in net.lines], dtype=int)
    to = np.array([bidx[ln.to_bus] for ln in net.lines], dtype=int)
    b = np.array([ln.susceptance for ln in net.lines])[:, None]
    dmin = np.array([ln.angle_diff_min for ln in net.lines])[:, None]
    dmax = np.array([ln.angle_diff_max for ln in net.lines])[:, None]
    pbar = np.array([ln.flow_limit for ln in net.lines])[:, None]
    on = np.ones((L, T), dtype=bool)
    for k, t in enumerate(hrs):
        for lid in schedule.off(int(t)):
            on[net.line_index[lid], k] = False
    if L:
        diff = sol.theta[fr] - sol.theta[to]
        flag("angle_limit", sol.line_ids, np.where(on, np.maximum(dmin - diff, diff - dmax), 0.0))
        flag("flow_definition", sol.line_ids, np.where(on, np.abs(sol.flow + b * diff), 0.0))
        flag("offline_line_flow", sol.line_ids, np.where(on, 0.0, np.abs(sol.flow)))
        flag("thermal_limit", sol.line_ids, np.where(on, np.abs(sol.flow) - pbar, 0.0))

    C = len(sol.candidates)
    if batt is not None and C:
        x = sol.placement
        flag("placement_limit", sol.candidates, np.maximum(-x, x - batt.x_max), per_hour=False)
        flag("placement_total", ["network"], np.array([x.sum() - batt.x_total]), per_hour=False)
        if sol.start == 0:
            e0 = np.array([batt.initial_soc(n) for n in sol.candidates])
            flag("initial_soc", sol.candidates, np.abs(sol.soc_start - e0), per_hour=False)
        prev = np.concatenate([sol.soc_start[:, None], sol.soc[:, :-1]], axis=1)
        h, e = batt.carryover, batt.efficiency
        resid = sol.soc - (h * prev + e * sol.p_c - sol.p_d / e)
        flag("soc_balance", sol.candidates, np.abs(resid))
        xc = x[:, None]
        flag("soc_limits", sol.candidates, np.maximum(xc * batt.e_min - sol.soc, sol.soc - xc * batt.e_max))
        flag("charge_limits", sol.candidates,
             np.maximum(xc * batt.p_rate_min - sol.p_c, sol.p_c - xc * batt.p_rate_max))
        flag("discharge_limits", sol.candidates,
             np.maximum(xc * batt.p_rate_min - sol.p_d, sol.p_d - xc * batt.p_rate_max))
        both = np.argwhere((sol.p_c > tol) & (sol.p_d > tol))
        rep.simultaneous = [(sol.candidates[i], int(hrs[k])) for i, k in both]

    # nodal balance: out-flow - in-flow - gen - slack - shed + charge - discharge + demand = 0
    net_inj = np.zeros((len(net.buses), T))
    if L:
        np.add.at(net_inj, fr, sol.flow)
        np.add.at(net_inj, to, -sol.flow)
    gb = np.array([bidx[g.bus] for g in net.generators], dtype=int)
    if len(gb):
        np.add.at(net_inj, gb, -sol.p_g)
    net_inj -= sol.g_slack + sol.p_ls
    if C:
        cb = np.array([bidx[n] for n in sol.candidates], dtype=int)
        np.add.at(net_inj, cb, sol.p_c - sol.p_d)
    flag("power_balance", sol.bus_ids, np.abs(net_inj + dem))
    return rep


def check_soc_chain(sol: PlanningSolution, batt: BatteryConfig) -> float:
    """Max deviation of the stored SOC series from a fresh recursion."""
    if not sol.candidates:
        return 0.0
    ref = soc_trajectory(sol.placement, sol.p_c, sol.p_d, sol.soc_start, batt)
    return float(np.max(np.abs(ref - sol.soc)))


# ------------------------------------------------------------------------ I/O

def _series_columns(sol):
    cols = []
    for name in SERIES:
        for ent in getattr(sol, _SERIES_IDS[name]):
            cols.append((name, ent))
    return cols


def write_solution(sol: PlanningSolution, out_dir, stem="solution", extra=None) -> Path:
    """Write ``<stem>.json`` (placement, costs, metadata) and ``<stem>_timeseries.csv``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    csv_name = f"{stem}_timeseries.csv"
    cols = _series_columns(sol)
    with open(out / csv_name, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["hour"] + [f"{n}[{e}]" for n, e in cols])
        idx = {name: {ent: i for i, ent in enumerate(getattr(sol, _SERIES_IDS[name]))} for name in SERIES}
        for k in range(sol.hours):
            w.writerow([sol.start + k] + [repr(float(getattr(sol, n)[idx[n][e], k])) for n, e in cols])
    doc = {
        "start_hour": sol.start,
        "hours": sol.hours,
        "placement": sol.placement_dict(),
        "soc_start": {n: float(v) for n, v in zip(sol.candidates, sol.soc_start)},
        "cost": sol.cost.to_dict() if sol.cost is not None else None,
        "buses": list(sol.bus_ids),
        "generators": list(sol.gen_ids),
        "lines": list(sol.line_ids),
        "timeseries": csv_name,
    }
    if extra:
        doc.update(extra)
    path = out / f"{stem}.json"
    path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path


class SolutionFormatError(ValueError):
    pass


def read_solution(path) -> PlanningSolution:
    """Load a solution written by ``write_solution``."""
    path = Path(path)
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
        cands = tuple(doc["placement"].keys())
        placement = np.array([float(doc["placement"][n]) for n in cands])
        soc_start = np.array([float(doc["soc_start"][n]) for n in cands])
        start, T = int(doc["start_hour"]), int(doc["hours"])
        buses, gens, lines = tuple(doc["buses"]), tuple(doc["generators"]), tuple(doc["lines"])
        csv_path = path.parent / doc["timeseries"]
    except (OSError, ValueError, KeyError, TypeError, AttributeError) as exc:
        raise SolutionFormatError(f"{path}: {exc}") from exc
    ids = {"bus_ids": buses, "gen_ids": gens, "line_ids": lines, "candidates": cands}
    try:
        with open(csv_path, newline="", encoding="utf-8") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise SolutionFormatError(f"{csv_path}: {exc}") from exc
    if not rows:
        raise SolutionFormatError(f"{csv_path}: empty file")
    header, body = rows[0], rows[1:]
    if len(body) != T:
        raise SolutionFormatError(f"{csv_path}: expected {T} hour rows, found {len(body)}")
    pos = {h: i for i, h in enumerate(header)}
    arrays = {}
    try:
        data = np.array([[float(v) for v in r] for r in body], dtype=float).reshape(T, len(header))
    except ValueError as exc:
        raise SolutionFormatError(f"{csv_path}: {exc}") from exc
    for name in SERIES:
        ents = ids[_SERIES_IDS[name]]
        arr = np.zeros((len(ents), T))
        for i, e in enumerate(ents):
            key = f"{name}[{e}]"
            if key not in pos:
                raise SolutionFormatError(f"{csv_path}: missing column {key}")
            arr[i] = data[:, pos[key]]
        arrays[name] = arr
    cost = None
    if doc.get("cost"):
        c = doc["cost"]
        cost = CostBreakdown(float(c["gen"]), float(c["loadshed"]), float(c["slack"]))
    return PlanningSolution(start, buses, gens, lines, cands, placement, soc_start, cost=cost, **arrays)

"""Direct (extensive-form) solves of the planning model."""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .lp import LPSolution, LPStatus, SolverOptions, solve_lp, warm_solve
from .network import DeenergizationSchedule, Network
from .opf import BatteryConfig, CostConfig, ModelError, PeriodSubproblem, build_extensive_form
from .solution import PlanningSolution, evaluate_cost, solution_from_lp

MAX_ENUMERATED_CANDIDATES = 6


class SolveError(RuntimeError):
    def __init__(self, message, status=None):
        super().__init__(message)
        self.status = status


@dataclass
class EFResult:
    solution: PlanningSolution
    lp_solution: LPSolution
    subproblem: PeriodSubproblem
    objective: float
    enumerated: int = 0


def solve_extensive_form(net: Network, demand: np.ndarray, batt: Optional[BatteryConfig],
                         cost: CostConfig, schedule: DeenergizationSchedule,
                         hours: Optional[int] = None, options: Optional[SolverOptions] = None,
                         hour_cap: int = 2000) -> EFResult:
    """Build and solve the whole-horizon LP, returning the decoded solution.

    With ``batt.integer_placement`` every integer placement vector within
    the caps is tried (at most six candidate buses) and the cheapest kept.
    """
    sub = build_extensive_form(net, demand, batt, cost, schedule, hours=hours, hour_cap=hour_cap)
    if batt is not None and batt.integer_placement and len(sub.candidates):
        return _solve_integer(sub, net, batt, cost, options)
    sol = solve_lp(sub.lp, options)
    if sol.status != LPStatus.OPTIMAL:
        raise SolveError(f"extensive form: solver returned {sol.status.value}", sol.status)
    return _decode(sub, sol, net, batt, cost)


def _decode(sub, sol, net, batt, cost, enumerated=0):
    ps = solution_from_lp(sub, sol.x, net, batt)
    ps.cost = evaluate_cost(ps, net, cost)
    return EFResult(ps, sol, sub, sol.objective, enumerated)


def integer_placements(n_cand: int, x_max: float, x_total: float):
    """All integer vectors in [0, x_max]^n with sum <= x_total, lexicographic."""
    if n_cand > MAX_ENUMERATED_CANDIDATES:
        raise ModelError(f"integer placement enumerates at most {MAX_ENUMERATED_CANDIDATES} candidate buses, got {n_cand}")
    cap = int(np.floor(x_max + 1e-9))
    tot = np.floor(x_total + 1e-9)
    for combo in itertools.product(range(cap + 1), repeat=n_cand):
        if sum(combo) <= tot:
            yield combo


def _solve_integer(sub, net, batt, cost, options):
    lp = sub.lp
    best = None
    basis = None
    count = 0
    for combo in integer_placements(len(sub.candidates), batt.x_max, batt.x_total):
        lb = lp.lb.copy()
        ub = lp.ub.copy()
        lb[sub.placement_cols] = combo
        ub[sub.placement_cols] = combo
        fixed = lp.replace(lb=lb, ub=ub)
        sol = warm_solve(fixed, basis, options) if basis is not None else solve_lp(fixed, options)
        count += 1
        if sol.status == LPStatus.OPTIMAL:
            basis = sol.basis
            if best is None or sol.objective < best[1].objective - 1e-9 * (1 + abs(sol.objective)):
                best = (fixed, sol)
    if best is None:
        raise SolveError("no integer placement admits a feasible dispatch", LPStatus.INFEASIBLE)
    fixed, sol = best
    res = _decode(sub, sol, net, batt, cost, enumerated=count)
    return res

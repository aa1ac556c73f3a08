"""Linear programming core: model containers, revised simplex, MPS I/O."""

from .model import INF, Basis, LPSolution, LPStatus, SolverOptions, StandardFormLP
from .simplex import RevisedSimplex, solve_lp, warm_solve

__all__ = ["INF", "Basis", "LPSolution", "LPStatus", "SolverOptions", "StandardFormLP",
           "RevisedSimplex", "solve_lp", "warm_solve"]

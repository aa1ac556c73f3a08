import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from batteryph.lp import Basis, LPStatus, SolverOptions, StandardFormLP, solve_lp, warm_solve
from batteryph.lp.kernels import get_backend

from oracles import highs_min, vertex_min


def dense_lp(c, A, senses, b, lb, ub, ranges=None, offset=0.0):
    A = np.asarray(A, dtype=float)
    r, k = np.nonzero(A)
    return StandardFormLP(c=c, rows=r, cols=k, vals=A[r, k], senses=senses, rhs=b, lb=lb, ub=ub,
                          ranges=ranges, obj_offset=offset)


def independent_dual_objective(lp, sol):
    """Dual objective from the reported row duals and reduced costs."""
    lo, hi = lp.row_bounds()
    y, d = sol.duals, sol.reduced_costs
    # reduced costs must be consistent with the duals
    assert np.allclose(d, lp.c - lp.matrix().T @ y, atol=1e-7)
    val = lp.obj_offset
    for i in range(lp.num_rows):
        if y[i] > 1e-12:
            val += y[i] * lo[i]
        elif y[i] < -1e-12:
            val += y[i] * hi[i]
    for j in range(lp.num_cols):
        if d[j] > 1e-12:
            val += d[j] * lp.lb[j]
        elif d[j] < -1e-12:
            val += d[j] * lp.ub[j]
    return val


def random_lp(seed, n=None, m=None, with_ranges=True):
    rng = np.random.default_rng(seed)
    n = n or int(rng.integers(2, 7))
    m = m or int(rng.integers(1, 5))
    A = rng.integers(-4, 5, size=(m, n)).astype(float)
    A[rng.random((m, n)) < 0.3] = 0.0
    x0 = rng.uniform(0, 2, n)
    senses = rng.choice(["L", "G", "E"], size=m, p=[0.45, 0.35, 0.2])
    act = A @ x0
    b = np.where(senses == "L", act + rng.uniform(0, 2, m), np.where(senses == "G", act - rng.uniform(0, 2, m), act))
    b = np.round(b, 3)
    lb = np.round(-rng.uniform(0, 1, n), 2)
    ub = np.round(2 + rng.uniform(0, 2, n), 2)
    ranges = None
    if with_ranges:
        ranges = np.where((senses != "E") & (rng.random(m) < 0.3), np.round(rng.uniform(0.5, 3, m), 2), np.nan)
    c = rng.integers(-5, 6, n).astype(float)
    return dense_lp(c, A, senses, b, lb, ub, ranges)


def test_small_known_optimum():
    # max 3x + 2y  s.t. x + y <= 4, x + 3y <= 6, x <= 3
    lp = dense_lp([-3, -2], [[1, 1], [1, 3]], ["L", "L"], [4, 6], [0, 0], [3, np.inf])
    sol = solve_lp(lp)
    assert sol.status == LPStatus.OPTIMAL
    assert sol.x == pytest.approx([3, 1])
    assert sol.objective == pytest.approx(-11)


def test_beale_cycling_instance_terminates():
    # classic instance on which textbook Dantzig pricing with lowest-index ties cycles
    c = [-0.75, 20, -0.5, 6]
    A = [[0.25, -8, -1, 9], [0.5, -12, -0.5, 3], [0, 0, 1, 0]]
    lp = dense_lp(c, A, ["L", "L", "L"], [0, 0, 1], [0] * 4, [np.inf] * 4)
    for backend in ("python", "cython"):
        sol = solve_lp(lp, kernels=get_backend(backend))
        assert sol.status == LPStatus.OPTIMAL
        assert sol.objective == pytest.approx(-1.25, abs=1e-9)
        assert sol.iterations < 50


def test_infeasible_detected():
    lp = dense_lp([1, 1], [[1, 1], [1, 1]], ["L", "G"], [1, 2], [0, 0], [5, 5])
    assert solve_lp(lp).status == LPStatus.INFEASIBLE


def test_unbounded_detected():
    lp = dense_lp([-1, 0], [[1, -1]], ["L"], [1], [0, 0], [np.inf, np.inf])
    assert solve_lp(lp).status == LPStatus.UNBOUNDED


def test_free_columns_and_equalities():
    # min |style| problem with free variables: min t s.t. t >= x - 2, t >= 2 - x, x = 5 - y, y in [0, 1]
    lp = dense_lp([1, 0, 0], [[1, -1, 0], [1, 1, 0], [0, 1, 1]], ["G", "G", "E"], [-2, 2, 5],
                  [-np.inf, -np.inf, 0], [np.inf, np.inf, 1])
    sol = solve_lp(lp)
    assert sol.status == LPStatus.OPTIMAL
    assert sol.objective == pytest.approx(2.0)
    assert sol.x[1] == pytest.approx(4.0)


def test_objective_offset_reported():
    lp = dense_lp([1], [[1]], ["G"], [2], [0], [10], offset=7.5)
    assert solve_lp(lp).objective == pytest.approx(9.5)


def test_no_rows():
    lp = StandardFormLP(c=[1, -2, 0], rows=[], cols=[], vals=[], senses=[], rhs=[],
                        lb=[-1, 0, 0], ub=[1, 3, 1])
    sol = solve_lp(lp)
    assert sol.status == LPStatus.OPTIMAL
    assert sol.objective == pytest.approx(-7)


@pytest.mark.parametrize("seed", range(40))
def test_random_lps_match_vertex_oracle(seed):
    lp = random_lp(seed)
    ref, _ = vertex_min(lp)
    sol = solve_lp(lp)
    if ref is None:
        assert sol.status == LPStatus.INFEASIBLE
        return
    assert sol.status == LPStatus.OPTIMAL
    assert abs(sol.objective - ref) <= 1e-6 * max(1.0, abs(ref))
    assert lp.max_violation(sol.x) <= 1e-7
    hi = highs_min(lp)
    assert hi == pytest.approx(ref, rel=1e-6, abs=1e-6)


@pytest.mark.parametrize("seed", range(40))
def test_duality_gap_on_random_lps(seed):
    lp = random_lp(seed)
    sol = solve_lp(lp)
    if sol.status != LPStatus.OPTIMAL:
        return
    assert sol.stats["duality_gap"] <= 1e-6 * (1 + abs(sol.objective))
    dual = independent_dual_objective(lp, sol)
    assert abs(dual - sol.objective) <= 1e-6 * (1 + abs(sol.objective))


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 10**6))
def test_random_lp_property_vs_highs(seed):
    lp = random_lp(seed)
    sol = solve_lp(lp)
    hi = highs_min(lp)
    if hi is None:
        assert sol.status != LPStatus.OPTIMAL
    else:
        assert sol.status == LPStatus.OPTIMAL
        assert abs(sol.objective - hi) <= 1e-6 * (1 + abs(hi))


def test_twenty_variable_instance_matches_oracle():
    lp = random_lp(7, n=8, m=5)
    ref, _ = vertex_min(lp)
    sol = solve_lp(lp)
    assert ref is not None
    assert abs(sol.objective - ref) <= 1e-6 * max(1, abs(ref))


def test_warm_start_after_cost_and_rhs_change():
    lp = random_lp(3, n=6, m=4, with_ranges=False)
    first = solve_lp(lp)
    assert first.status == LPStatus.OPTIMAL
    changed = lp.replace(c=lp.c + 0.1 * np.arange(lp.num_cols), rhs=lp.rhs + 0.05)
    cold = solve_lp(changed)
    warm = warm_solve(changed, first.basis)
    assert warm.status == cold.status
    if cold.status == LPStatus.OPTIMAL:
        assert warm.objective == pytest.approx(cold.objective, abs=1e-9)
    assert warm.stats["warm_start"] != "none"


def test_warm_start_at_optimum_needs_no_pivots():
    lp = random_lp(11, with_ranges=False)
    first = solve_lp(lp)
    assert first.status == LPStatus.OPTIMAL
    again = warm_solve(lp, first.basis)
    assert again.iterations == 0
    assert again.objective == first.objective


def test_stale_basis_falls_back_to_cold_start():
    lp = random_lp(5, with_ranges=False)
    bad = Basis(np.zeros(lp.num_rows, dtype=np.int64), np.zeros(lp.num_cols + lp.num_rows, dtype=np.int8))
    sol = warm_solve(lp, bad)
    ref = solve_lp(lp)
    assert sol.status == ref.status
    assert sol.stats["warm_start"] == "stale-fallback"


def test_basis_extend_keeps_status_and_shifts_logicals():
    b = Basis(np.array([0, 3]), np.array([0, 1, 2, 0, 1], dtype=np.int8))  # n=3, m=2
    e = b.extend(3, add_cols=2, add_rows=1)
    assert list(e.head) == [0, 5, 7]
    assert list(e.status) == [0, 1, 2, 1, 1, 0, 1, 0]


@pytest.mark.parametrize("seed", range(10))
def test_backends_agree(seed):
    lp = random_lp(100 + seed)
    a = solve_lp(lp, kernels=get_backend("python"))
    b = solve_lp(lp, kernels=get_backend("cython"))
    assert a.status == b.status
    if a.status == LPStatus.OPTIMAL:
        assert a.objective == pytest.approx(b.objective, abs=1e-9)


def test_iteration_limit_reported():
    c = [-0.75, 20, -0.5, 6]
    A = [[0.25, -8, -1, 9], [0.5, -12, -0.5, 3], [0, 0, 1, 0]]
    lp = dense_lp(c, A, ["L", "L", "L"], [0, 0, 1], [0] * 4, [np.inf] * 4)
    sol = solve_lp(lp, SolverOptions(max_iter=1))
    assert sol.status == LPStatus.ITERATION_LIMIT
    assert sol.basis is not None


def test_validate_rejects_inconsistent_bounds():
    with pytest.raises(ValueError):
        dense_lp([1], [[1]], ["L"], [1], [2], [1])

import numpy as np
import pytest

from lsreopt.core import (
    Solution,
    check_feasibility,
    evaluate_cost,
    generate_instance,
)
from lsreopt.heuristics import greedy_plan
from lsreopt.model import build_nominal_model, solution_to_assignment
from lsreopt.simplex import OPTIMAL, solve_lp
from lsreopt.solver import (
    InfeasibleWarmStartError,
    STATUS_BUDGET,
    STATUS_OPTIMAL,
    SolveBudget,
    SolveResult,
    solve_milp,
)

from conftest import desk_spec, tiny_spec
from oracles import brute_force_optimum

LONG = SolveBudget(simplex_iteration_limit=10**7)


def test_lp_relaxation_bounds_the_milp(tiny_instance):
    model = build_nominal_model(tiny_instance)
    status, values, lp_obj, iters = solve_lp(model)
    assert status == OPTIMAL and iters > 0
    result = solve_milp(model, None, LONG)
    assert result.status == STATUS_OPTIMAL
    assert lp_obj <= result.incumbent_value + 1e-9


def test_integral_relaxation_finishes_at_root():
    # a model whose relaxation is already integral: zero demand
    import lsreopt.core as core
    inst = core.Instance(
        M=1, N=1, T=2,
        f=[1.0], p=[0.0], h=[1.0], s=[1.0], b=[1.0], m=[0.0],
        l=[[1.0, 1.0]], I0=[0.0], d=[[0.0, 0.0]], c=[[5.0, 5.0]], w=[[1]],
    )
    model = build_nominal_model(inst)
    result = solve_milp(model, None, LONG)
    assert result.status == STATUS_OPTIMAL
    assert result.nodes_explored == 1
    assert result.incumbent_value == pytest.approx(0.0)


def test_branch_and_bound_matches_brute_force_on_20_tiny_instances():
    spec = tiny_spec()
    for seed in range(20):
        inst = generate_instance(spec, seed)
        model = build_nominal_model(inst)
        result = solve_milp(model, None, LONG)
        assert result.status == STATUS_OPTIMAL, (seed, result.status)
        oracle_value, oracle_sol = brute_force_optimum(inst)
        assert result.incumbent_value == pytest.approx(oracle_value, abs=1e-6), seed
        assert check_feasibility(inst, result.incumbent).feasible
        assert evaluate_cost(inst, result.incumbent).total == pytest.approx(
            result.incumbent_value, abs=1e-6)


def test_warm_start_floor_and_budget_exhaustion(desk_instance):
    model = build_nominal_model(desk_instance)
    warm = greedy_plan(desk_instance)
    warm_value = evaluate_cost(desk_instance, warm).total
    result = solve_milp(model, warm, SolveBudget(simplex_iteration_limit=1))
    assert result.status == STATUS_BUDGET
    assert result.incumbent_value == pytest.approx(warm_value)
    assert np.array_equal(result.incumbent.Y, warm.Y)
    bigger = solve_milp(model, warm, SolveBudget(simplex_iteration_limit=4000))
    assert bigger.incumbent_value <= warm_value + 1e-9


def test_infeasible_warm_start_is_rejected(desk_instance):
    model = build_nominal_model(desk_instance)
    warm = greedy_plan(desk_instance)
    X = warm.X.copy()
    X[0, 0, 0] = desk_instance.c[0, 0] * 5
    bad = Solution(X=X, Y=warm.Y, Z=warm.Z, I=warm.I, L=warm.L)
    with pytest.raises(InfeasibleWarmStartError):
        solve_milp(model, bad, LONG)


def test_solve_is_deterministic(tiny_instance):
    model = build_nominal_model(tiny_instance)
    warm = greedy_plan(tiny_instance)
    a = solve_milp(model, warm, SolveBudget(simplex_iteration_limit=5000))
    b = solve_milp(build_nominal_model(tiny_instance), warm,
                   SolveBudget(simplex_iteration_limit=5000))
    assert a.status == b.status
    assert a.incumbent_value == b.incumbent_value
    assert a.iterations_used == b.iterations_used
    assert a.nodes_explored == b.nodes_explored
    assert np.array_equal(a.incumbent.Y, b.incumbent.Y)
    assert np.array_equal(a.incumbent.X, b.incumbent.X)


def test_incumbent_dominates_bound_and_passes_feasibility():
    spec = desk_spec(items=(4,), periods=(6,))
    for seed in range(3):
        inst = generate_instance(spec, seed)
        model = build_nominal_model(inst)
        warm = greedy_plan(inst)
        result = solve_milp(model, warm, SolveBudget(simplex_iteration_limit=3000))
        assert result.incumbent is not None
        assert check_feasibility(inst, result.incumbent).feasible
        assert result.incumbent_value >= result.best_bound - 1e-6
        if result.status == STATUS_OPTIMAL:
            assert result.gap <= 1e-6


def test_warm_start_solution_matches_its_value(desk_instance):
    model = build_nominal_model(desk_instance)
    warm = greedy_plan(desk_instance)
    res = solve_milp(model, warm, SolveBudget(simplex_iteration_limit=2))
    got = evaluate_cost(desk_instance, res.incumbent).total
    assert got == pytest.approx(res.incumbent_value)

import math

import numpy as np
import pytest

from cargohitch.formulations import build_arc_mip
from cargohitch.graph import build_graph
from cargohitch.lp import (
    BnbConfig,
    LpBuilder,
    LpStatus,
    LpWorkspace,
    branch_and_bound,
    complementarity_residual,
    dual_objective,
    mip_gap,
    most_fractional,
    primal_residual,
    solve_lp,
    write_lp,
)

from oracles import dense_simplex, enumerate_optimum, lp_oracle


def _one_var():
    b = LpBuilder()
    x = b.add_var("x", 1.0)
    b.add_row("r", {x: 1.0}, lower=3.0)
    return b.build()


def test_single_variable_lp():
    sol = solve_lp(_one_var())
    assert sol.status == LpStatus.OPTIMAL
    assert sol.x[0] == pytest.approx(3.0)
    assert sol.row_dual[0] == pytest.approx(1.0)


def test_symmetric_lp_dual():
    b = LpBuilder()
    x, y = b.add_var("x", -1.0), b.add_var("y", -1.0)
    b.add_row("r", {x: 1.0, y: 1.0}, upper=1.0)
    lp = b.build()
    sol = solve_lp(lp)
    assert sol.objective == pytest.approx(-1.0)
    assert sol.row_dual[0] == pytest.approx(-1.0)
    assert dual_objective(lp, sol) == pytest.approx(sol.objective)
    assert primal_residual(lp, sol.x) <= 1e-9
    assert complementarity_residual(lp, sol) <= 1e-9


def test_infeasible_and_unbounded():
    b = LpBuilder()
    x = b.add_var("x", 1.0, upper=1.0)
    b.add_row("r", {x: 1.0}, lower=2.0)
    assert solve_lp(b.build()).status == LpStatus.INFEASIBLE
    b = LpBuilder()
    b.add_var("x", -1.0)
    assert solve_lp(b.build()).status == LpStatus.UNBOUNDED


def test_example_relaxation_matches_dense_simplex(example):
    lp = build_arc_mip(build_graph(example)).lp.relaxed()
    status, ref = lp_oracle(lp)
    assert status == "optimal"
    assert solve_lp(lp).objective == pytest.approx(ref, abs=1e-7)


def test_dense_simplex_oracle_on_textbook_lp():
    # max 3x + 5y st x <= 4, 2y <= 12, 3x + 2y <= 18 -> 36 at (2, 6)
    status, x, obj = dense_simplex([-3, -5], [[1, 0], [0, 2], [3, 2]], [4, 12, 18])
    assert status == "optimal"
    assert obj == pytest.approx(-36.0)
    assert x == pytest.approx([2.0, 6.0])
    status, _, _ = dense_simplex([1, 1], A_eq=[[1, 1]], b_eq=[-1])
    assert status == "infeasible"


def test_pure_lp_branch_and_bound_is_plain_lp():
    lp = _one_var()
    res = branch_and_bound(lp)
    assert res.status == "optimal"
    assert res.objective == pytest.approx(solve_lp(lp).objective)
    assert res.nodes == 1


def test_knapsack_toy():
    b = LpBuilder()
    a = b.add_var("a", -5.0, 0.0, 1.0, integer=True)
    c = b.add_var("b", -4.0, 0.0, 1.0, integer=True)
    b.add_row("w", {a: 3.0, c: 2.0}, upper=4.0)
    res = branch_and_bound(b.build())
    assert res.objective == pytest.approx(-5.0)
    assert res.x[a] == pytest.approx(1.0) and res.x[c] == pytest.approx(0.0)
    assert res.gap == 0.0


def test_arc_mip_of_example_matches_enumeration(example):
    pg = build_graph(example)
    opt, accepted = enumerate_optimum(pg)
    res = branch_and_bound(build_arc_mip(pg).lp)
    assert opt == pytest.approx(13.0)
    assert accepted == ["2"]
    assert res.objective == pytest.approx(opt, rel=1e-9)


def test_bound_history_is_a_sandwich():
    rng = np.random.default_rng(3)
    b = LpBuilder()
    xs = [b.add_var(f"x{i}", -float(rng.integers(1, 20)), 0, 3, integer=True) for i in range(8)]
    b.add_row("cap", {x: float(rng.integers(1, 9)) for x in xs}, upper=17.0)
    b.add_row("cap2", {x: float(rng.integers(1, 9)) for x in xs}, upper=21.0)
    res = branch_and_bound(b.build())
    for lb, ub in res.history:
        assert lb <= res.objective + 1e-9 <= ub + 2e-9 or math.isinf(ub)


def test_start_solution_used_as_incumbent():
    b = LpBuilder()
    x = b.add_var("x", 1.0, 0, 10, integer=True)
    b.add_row("r", {x: 2.0}, lower=3.0)
    lp = b.build()
    res = branch_and_bound(lp, BnbConfig(start=np.array([5.0])))
    assert res.objective == pytest.approx(2.0)


def test_helpers():
    assert mip_gap(13.0, 13.0) == 0.0
    assert mip_gap(math.inf, 0.0) == math.inf
    assert most_fractional(np.array([0.5, 0.2, 0.5]), np.array([0, 1, 2])) == 0
    assert most_fractional(np.array([1.0, 2.0]), np.array([0, 1])) is None


def test_workspace_adds_columns_and_keeps_duals():
    lp = _one_var()
    ws = LpWorkspace(lp)
    assert ws.solve().objective == pytest.approx(3.0)
    ws.add_column(0.5, 0.0, math.inf, [0], [1.0], name="cheap")
    sol = ws.solve()
    assert sol.objective == pytest.approx(1.5)
    assert sol.row_dual[0] == pytest.approx(0.5)


def test_lp_file_round_trips_through_highs(tmp_path, example):
    import highspy

    lp = build_arc_mip(build_graph(example)).lp
    path = tmp_path / "m.lp"
    text = write_lp(lp, path)
    assert "minimize" in text.lower()
    h = highspy.Highs()
    h.setOptionValue("output_flag", False)
    h.readModel(str(path))
    h.run()
    assert h.getInfo().objective_function_value == pytest.approx(13.0)

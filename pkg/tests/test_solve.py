import json
import math
from dataclasses import replace

import pytest

from cargohitch.formulations import build_arc_mip, build_rmp
from cargohitch.generator import generate_instance
from cargohitch.graph import build_graph
from cargohitch.lp import branch_and_bound, solve_lp
from cargohitch.solve import (
    InfeasibleInstance,
    Solution,
    SolveConfig,
    SolveError,
    all_rejected,
    audit,
    column_generation,
    integrality_gap,
    select_branching_variable,
    solve,
)

from conftest import small_example

EXACT = SolveConfig(epsilon=1e-9)


def test_gap_definition():
    assert integrality_gap(13.0, 13.0) == 0.0
    assert integrality_gap(101.0, 100.0) == pytest.approx(0.00990099, abs=1e-8)
    assert integrality_gap(0.0, 0.0) == 0.0
    with pytest.raises(SolveError):
        integrality_gap(10.0, 11.0)


@pytest.mark.parametrize("y, h", [((0.5, 0.2), 1), ((1.9, 2.1), 1), ((3.0, 0.49), 2)])
def test_branching_rule(y, h):
    assert select_branching_variable(y) == h


def test_branching_rule_needs_a_fractional_value():
    with pytest.raises(SolveError):
        select_branching_variable((1.0, 2.0))


@pytest.mark.parametrize("algo", ["mip", "pnb", "bnp"])
def test_example_optimum(example, algo):
    pg = build_graph(example)
    sol = solve(pg, algo, EXACT)
    assert sol.objective == pytest.approx(13.0)
    assert sol.gap == pytest.approx(0.0, abs=1e-9)
    assert sol.status == "optimal"
    assert sol.y == {"L1": 0, "L2": 1}
    assert sorted(sol.accepted) == ["2"] and sol.rejected == []
    assert audit(pg, sol) == []


def test_integral_root_needs_no_branching(example):
    sol = solve(example, "bnp", EXACT)
    assert sol.stats["nodes"] == 1


@pytest.mark.parametrize("algo", ["mip", "pnb", "bnp"])
def test_low_penalty_rejects_everything(example, algo):
    inst = example.replace_costs(penalty_per_unit=1.0)
    sol = solve(inst, algo, EXACT)
    assert sol.rejected == ["2"] and sol.accepted == {}
    assert all(v == 0 for v in sol.y.values())
    assert sol.objective == pytest.approx(1.0)


def test_column_generation_on_example(example):
    pg = build_graph(example)
    cg = column_generation(build_rmp(pg), SolveConfig())
    assert cg.converged and cg.iterations < 10
    assert cg.value == pytest.approx(solve_lp(build_arc_mip(pg).lp.relaxed()).objective, abs=1e-5)


def test_column_generation_without_freight():
    inst = small_example()
    inst = replace(inst, requests=inst.requests[:1])
    cg = column_generation(build_rmp(build_graph(inst)), SolveConfig())
    assert cg.iterations == 1 and cg.value == 0.0


def test_no_freight_solution_is_empty():
    inst = small_example()
    inst = replace(inst, requests=inst.requests[:1])
    for algo in ("mip", "pnb", "bnp"):
        sol = solve(inst, algo)
        assert sol.objective == 0.0 and all(v == 0 for v in sol.y.values())


def test_unmeetable_service_level(example):
    inst = replace(example, params=replace(example.params, chi=1.0))
    for algo in ("mip", "pnb", "bnp"):
        with pytest.raises(InfeasibleInstance):
            solve(inst, algo)


def test_unknown_algorithm(example):
    with pytest.raises(SolveError, match="unknown algorithm"):
        solve(example, "greedy")


def test_config_validation():
    with pytest.raises(SolveError):
        SolveConfig(epsilon=0)
    with pytest.raises(SolveError):
        SolveConfig(time_limit=10, branch_reserve=10)
    with pytest.raises(SolveError):
        SolveConfig(phi=1.5)


def test_price_and_branch_never_beats_the_mip():
    equal = 0
    for seed in range(100):
        pg = build_graph(generate_instance("tiny-oracle", seed))
        mip = solve(pg, "mip", EXACT).objective
        pnb = solve(pg, "pnb", SolveConfig(phi=1.0))
        assert pnb.objective >= mip - 1e-6 * max(1.0, abs(mip))
        assert audit(pg, pnb) == []
        equal += math.isclose(pnb.objective, mip, rel_tol=1e-6, abs_tol=1e-9)
    assert equal >= 95


def test_time_limit_returns_a_valid_solution():
    pg = build_graph(generate_instance("partial-pricing", 0))
    for algo in ("mip", "pnb", "bnp"):
        sol = solve(pg, algo, SolveConfig(time_limit=0.5, branch_reserve=0.25))
        assert sol.status in ("time_limit", "optimal")
        assert audit(pg, sol) == []
        assert sol.lower_bound <= sol.objective + 1e-9


def test_all_rejected_is_feasible(example):
    pg = build_graph(example)
    sol = all_rejected(pg, "x")
    assert audit(pg, sol) == []
    assert sol.objective == pytest.approx(100.0)


def test_audit_catches_tampering(example):
    pg = build_graph(example)
    sol = solve(pg, "bnp", EXACT)
    broken = replace(sol, y={"L1": 0, "L2": 0})
    assert any("exceeds y" in m for m in audit(pg, broken))
    broken = replace(sol, x={a: 0 for a in sol.x}, y={"L1": 0, "L2": 0}, objective=3.0)
    assert any("over allocated capacity" in m for m in audit(pg, broken))
    broken = replace(sol, objective=12.0)
    assert any("objective" in m for m in audit(pg, broken))
    broken = replace(sol, rejected=["2"])
    assert any("partition" in m for m in audit(pg, broken))
    path = sol.accepted["2"]
    broken = replace(sol, accepted={"2": path[:2] + path[3:]})
    assert audit(pg, broken)


def test_solution_json_round_trip(example):
    pg = build_graph(example)
    sol = solve(pg, "bnp", EXACT)
    text = sol.to_json(pg)
    back = Solution.from_dict(pg, json.loads(text))
    assert back.to_json(pg) == text
    assert "time" not in text and "wall_time" not in text
    assert "wall_time" in sol.to_json(pg, timings=True)


def test_solution_json_rejects_foreign_labels(example):
    pg = build_graph(example)
    doc = json.loads(solve(pg, "mip").to_json(pg))
    doc["accepted"][0]["path"][0] = "A:nowhere"
    with pytest.raises(SolveError):
        Solution.from_dict(pg, doc)


def test_same_seed_same_bytes():
    inst = generate_instance("tiny-oracle", 11)
    a, b = (solve(build_graph(inst), "bnp", EXACT) for _ in range(2))
    pg = build_graph(inst)
    assert a.to_json(pg) == b.to_json(pg)


def test_arc_mip_relaxation_bounds_branch_and_price():
    for seed in range(5):
        pg = build_graph(generate_instance("tiny-oracle", seed))
        lp = solve_lp(build_arc_mip(pg).lp.relaxed()).objective
        bnp = solve(pg, "bnp", EXACT)
        assert lp <= bnp.objective + 1e-7
        assert bnp.objective == pytest.approx(branch_and_bound(build_arc_mip(pg).lp).objective, rel=1e-6)

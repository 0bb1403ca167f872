"""End-to-end acceptance checks, one test per criterion.

The tiny suite is solved once per session and shared; each test records a
PASS/FAIL line that is repeated in the terminal summary.
"""

import math
import time
from dataclasses import dataclass, field

import numpy as np
import pytest

from cargohitch.cli import log_csv
from cargohitch.costs import EconomicParameters, design_cost, egress_cost, penalty_cost
from cargohitch.formulations import build_arc_mip, build_rmp, extract_duals
from cargohitch.generator import GeneratorConfig, generate_instance, preset
from cargohitch.graph import DUMMY, SEGMENT, build_graph, heuristic_w
from cargohitch.lp import solve_lp
from cargohitch.pricing import PricingState, adapted_costs, shortest_path
from cargohitch.report import (
    TRANSIT_COST,
    TRUCK_EXTERNALITY,
    SweepGrid,
    monotonicity_violations,
    sensitivity_sweep,
    sweep_instance,
    utilization_report,
)
from cargohitch.solve import SolveConfig, audit, column_generation, solve

from conftest import small_example
from oracles import enumerate_optimum
from test_graph import _true_remaining

TINY_SEEDS = range(100)
EXACT = SolveConfig(epsilon=1e-9, verify_pricing=True)
AUDITS: list[tuple[str, list[str]]] = []


def _audited(label, pg, sol):
    AUDITS.append((label, audit(pg, sol)))
    return sol


def _close(a, b, rel):
    return abs(a - b) <= rel * max(abs(a), abs(b), 1.0)


@dataclass
class TinyRun:
    seed: int
    oracle: float
    bnp: float
    mip: float
    cg_root: float
    arc_lp: float
    sandwich: list[tuple[str, float, float]] = field(default_factory=list)
    mismatches: int = 0
    pricing_calls: int = 0
    inadmissible: int = 0


def _heuristic_violations(pg, rng) -> int:
    """Exhaustive w <= true remaining cost, under static and dual-adapted costs."""
    bad = 0
    static = {a: pg.graph.arcs[a].cost for a in pg.freight_arcs}
    master = build_rmp(pg)
    duals = extract_duals(master.solve(), master)
    for s in pg.graph.segments:
        duals.alpha[s] = -float(rng.exponential(0.5)) if rng.random() < 0.5 else 0.0
    adapted = adapted_costs(pg, duals)
    for req in pg.instance.freight_requests:
        w = heuristic_w(pg.graph, pg.wprime, req)
        for cost in (static, adapted):
            truth = _true_remaining(pg, req, cost)
            bad += sum(1 for v, est in w.items() if est > truth.get(v, math.inf) + 1e-9)
    return bad


@pytest.fixture(scope="session")
def tiny_suite():
    t0 = time.monotonic()
    runs = []
    rng = np.random.default_rng(2024)
    for seed in TINY_SEEDS:
        pg = build_graph(generate_instance("tiny-oracle", seed))
        oracle, _ = enumerate_optimum(pg)
        bnp = _audited(f"tiny {seed} bnp", pg, solve(pg, "bnp", EXACT))
        mip = _audited(f"tiny {seed} mip", pg, solve(pg, "mip", EXACT))
        _audited(f"tiny {seed} pnb", pg, solve(pg, "pnb", EXACT))

        master = build_rmp(pg)
        state = PricingState.for_instance(pg, verify=True)
        fulls = []
        cg = column_generation(master, EXACT, state, on_full_round=lambda lb, rmp: fulls.append(lb))
        arc_lp = solve_lp(build_arc_mip(pg).lp.relaxed()).objective

        run = TinyRun(seed, oracle, bnp.objective, mip.objective, cg.value, arc_lp)
        run.sandwich += [("cg full round", lb, bnp.objective) for lb in fulls]
        run.sandwich += [(f"bnp {e['phase']}", e["lb"], e["ub"]) for e in bnp.log]
        run.mismatches = len(state.mismatches) + bnp.stats["pricing_mismatches"]
        run.pricing_calls = state.calls + bnp.stats["pricing_calls"]
        run.inadmissible = _heuristic_violations(pg, rng)
        runs.append(run)
    return runs, time.monotonic() - t0


def test_c01_example_segments_and_dummy_arc(verdict):
    t = time.monotonic()
    g = build_graph(small_example()).graph
    elapsed = time.monotonic() - t
    segs = {
        ((g.arcs[a].tail.key, g.arcs[a].tail.time), (g.arcs[a].head.key, g.arcs[a].head.time), g.arcs[a].vehicle)
        for a in g.segments
    }
    want = {
        (("s1", 2), ("s2", 3), 1),
        (("s2", 3), ("s4", 6), 1),
        (("s5", 1), ("s2", 2), 2),
        (("s2", 2), ("s6", 4), 2),
    }
    dummies = {(a.tail.label, a.head.label) for a in g.arcs if a.cls == DUMMY}
    ok = segs == want and dummies == {("o:2@0", "d:2@6")} and all(g.arcs[a].cls == SEGMENT for a in g.segments)
    verdict(1, ok and elapsed < 1.0, f"segments={sorted(segs)} dummy={sorted(dummies)} time={elapsed:.3f}s")


def test_c02_oracle_equivalence(tiny_suite, verdict):
    runs, elapsed = tiny_suite
    bad = [r.seed for r in runs if not (_close(r.bnp, r.oracle, 1e-6) and _close(r.mip, r.oracle, 1e-6))]
    ok = len(runs) >= 100 and not bad and elapsed < 600
    verdict(2, ok, f"{len(runs)} instances, disagreements at seeds {bad}, suite time {elapsed:.1f}s")


def test_c03_root_equivalence(tiny_suite, verdict):
    runs, _ = tiny_suite
    worst = max(abs(r.cg_root - r.arc_lp) for r in runs)
    verdict(3, worst <= 1e-5, f"max |CG root - arc LP| = {worst:.2e} over {len(runs)} instances")


def test_c04_bound_sandwich(tiny_suite, verdict):
    runs, _ = tiny_suite
    viol = [
        (r.seed, what, lb, ub)
        for r in runs
        for what, lb, ub in r.sandwich
        if lb > r.oracle + 1e-9 * max(1.0, abs(r.oracle)) or ub < r.oracle - 1e-9 * max(1.0, abs(r.oracle))
    ]
    checks = sum(len(r.sandwich) for r in runs)
    verdict(4, not viol, f"{checks} bound checks, violations {viol[:5]}")


def test_c05_astar_exactness(tiny_suite, verdict):
    runs, _ = tiny_suite
    calls = sum(r.pricing_calls for r in runs)
    mism = sum(r.mismatches for r in runs)
    inadm = sum(r.inadmissible for r in runs)
    verdict(5, calls > 0 and mism == 0 and inadm == 0,
            f"{calls} pricing calls, {mism} A*/Dijkstra mismatches, {inadm} inadmissible heuristic values")


def test_c06_partial_pricing_trend(verdict):
    wins, agree, rows = 0, 0, []
    for i in range(15):
        cfg = GeneratorConfig(**{**preset("partial-pricing").to_dict(), "n_freight": 40 + 4 * i})
        pg = build_graph(generate_instance(cfg, i))
        counts, roots = {}, {}
        for phi in (0.1, 1.0):
            cg = column_generation(build_rmp(pg), SolveConfig(phi=phi, epsilon=1e-3))
            counts[phi] = sum(e["columns"] for e in cg.log)
            roots[phi] = cg.value
        wins += counts[0.1] < counts[1.0]
        agree += abs(roots[0.1] - roots[1.0]) <= 1e-3 * max(abs(roots[1.0]), 1.0)
        rows.append((i, counts[0.1], counts[1.0]))
    verdict(6, wins >= 12 and agree == 15, f"fewer columns at phi=0.1 in {wins}/15, roots agree in {agree}/15; {rows}")


def test_c07_cost_derivations(verdict):
    p = EconomicParameters()
    c_h, pen, egr = design_cost(p), penalty_cost(p, 1.0), egress_cost(p)
    ok = abs(c_h - 68.18) <= 0.5 and abs(pen - 1.92) <= 1e-6 and abs(egr - 0.8418) <= 1e-6
    verdict(7, ok, f"c_h={c_h:.4f} penalty(q=1)={pen:.6f} egress={egr:.6f}")


def _min_routing_margin(inst):
    """Smallest per-unit cost of a non-rejection path minus the per-unit penalty."""
    pg = build_graph(inst)
    cost = {a: pg.graph.arcs[a].cost for a in pg.freight_arcs}
    dummies = frozenset(a.id for a in pg.graph.arcs if a.cls == DUMMY)
    margin = math.inf
    for r in inst.freight_requests:
        _, routed = shortest_path(pg, r, cost, None, forbidden=dummies)
        margin = min(margin, routed - pg.graph.arcs[pg.graph.dummy[r.id]].cost)
    return margin


def test_c08_sensitivity_monotonicity(verdict):
    template = generate_instance("sweep", 0)
    grid = SweepGrid(TRUCK_EXTERNALITY, TRANSIT_COST, seeds=(0,))
    res = sensitivity_sweep(template, grid, on_solution=lambda pg, sol: _audited("sweep cell", pg, sol))
    viol = monotonicity_violations(res.shares, 0.02)
    col = res.shares[:, 0]
    margins = [_min_routing_margin(sweep_instance(template, grid, 0.05, c)) for c in TRANSIT_COST]
    ok = (
        len(template.freight_requests) == 20
        and not res.failures
        and len(viol) <= 1
        and bool(np.all(col == 1.0))
        and min(margins) > 0
    )
    verdict(8, ok, f"violations>0.02: {viol}; share at 0.05: {sorted(set(col.tolist()))}; "
                   f"min routing-minus-penalty margin {min(margins):.4f}; failures {len(res.failures)}")


def test_c09_solution_audit(tiny_suite, verdict):
    inst = small_example()
    pg = build_graph(inst)
    for algo in ("mip", "pnb", "bnp"):
        _audited(f"example {algo}", pg, solve(pg, algo, EXACT))
    bad = [(label, v) for label, v in AUDITS if v]
    verdict(9, not bad and len(AUDITS) > 300, f"{len(AUDITS)} solutions audited, violations {bad[:3]}")


def _artifacts(seed):
    pg = build_graph(generate_instance("tiny-oracle", seed))
    sol = solve(pg, "bnp", SolveConfig(epsilon=1e-9))
    out = {"solution.json": sol.to_json(pg), "log.csv": log_csv(sol)}
    out.update(utilization_report(sol, pg).csv())
    return out


def test_c10_determinism(verdict):
    grid = SweepGrid((0.05, 0.6, 1.6), (0.1, 1.0, 2.0))
    same, total = 0, 0
    for seed in range(10):
        a, b = _artifacts(seed), _artifacts(seed)
        total += len(a)
        same += sum(a[k] == b[k] for k in a)
    sweeps = [sensitivity_sweep("sweep", grid).csv() for _ in range(2)]
    total += 1
    same += sweeps[0] == sweeps[1]
    verdict(10, same == total, f"{same}/{total} artifacts byte-identical across two runs")

"""Column generation, price-and-branch, branch-and-price and solution records."""

from __future__ import annotations

import heapq
import json
import math
import time
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np

from .formulations import (
    Column,
    MasterState,
    add_columns,
    build_arc_mip,
    build_rmp,
    extract_duals,
    fix_and_integerize,
    make_column,
)
from .graph import DUMMY, SEGMENT, PreparedGraph, build_graph, destination_vertex, origin_vertex
from .lp import INT_TOL, BnbConfig, LpBuilder, LpStatus, branch_and_bound, most_fractional, solve_lp
from .model import Instance
from .pricing import (
    PricingState,
    Restrictions,
    lagrangian_lower_bound,
    partial_pricing_round,
)


class SolveError(RuntimeError):
    pass


class InfeasibleInstance(SolveError):
    pass


@dataclass
class SolveConfig:
    time_limit: float = 5400.0
    branch_reserve: float = 900.0
    epsilon: float = 1e-3
    phi: float = 1.0
    cadence: int = 5
    node_ub_time: float = 60.0
    node_cg_time: float = 120.0
    seed: int = 0
    mip_gap: float = 1e-9
    verify_pricing: bool = False

    def __post_init__(self):
        if not self.epsilon > 0:
            raise SolveError("epsilon must be positive")
        if not 0 <= self.branch_reserve < self.time_limit:
            raise SolveError("branching reserve must be below the total time limit")
        if not 0 < self.phi <= 1:
            raise SolveError("phi must lie in (0, 1]")


def integrality_gap(ub: float, lb: float) -> float:
    if lb > ub + 1e-6 * max(1.0, abs(ub)):
        raise SolveError(f"lower bound {lb} exceeds upper bound {ub}")
    if not math.isfinite(ub):
        return math.inf
    return max(ub - lb, 0.0) / max(ub, 1e-10)


def select_branching_variable(y: Mapping[int, float] | Sequence[float], tol: float = INT_TOL):
    """Design variable farthest from integrality; ties go to the lowest index.

    A sequence is indexed from 1, matching vehicle layers.
    """
    items = sorted(y.items()) if isinstance(y, Mapping) else list(enumerate(y, start=1))
    best, best_h = tol, None
    for h, v in items:
        f = v - math.floor(v)
        d = min(f, 1.0 - f)
        if d > best:
            best, best_h = d, h
    if best_h is None:
        raise SolveError("no fractional design variable to branch on")
    return best_h


# ---------------------------------------------------------------------------
# column generation


@dataclass
class CGResult:
    value: float
    lower_bound: float
    iterations: int
    converged: bool
    infeasible: bool = False
    log: list[dict] = field(default_factory=list)


def column_generation(
    master: MasterState,
    config: SolveConfig,
    state: PricingState | None = None,
    time_limit: float | None = None,
    lower_bound: float = -math.inf,
    restrictions: Restrictions | None = None,
    on_full_round: Callable[[float, float], None] | None = None,
) -> CGResult:
    """Solve the master relaxation by pricing columns until the bound gap closes."""
    pg = master.pg
    state = state or PricingState.for_instance(pg, phi=config.phi, cadence=config.cadence, verify=config.verify_pricing)
    t0 = time.monotonic()
    limit = config.time_limit if time_limit is None else time_limit
    lb = max(lower_bound, 0.0)  # every cost is nonnegative
    gaps: list[float] = []
    log: list[dict] = []
    force_full = False
    it = 0
    value = math.inf
    converged = False
    while True:
        it += 1
        sol = master.solve()
        if sol.status == LpStatus.INFEASIBLE:
            return CGResult(math.inf, math.inf, it, True, True, log)
        if sol.status != LpStatus.OPTIMAL:
            raise SolveError(f"master LP {sol.status.value} at column-generation iteration {it}")
        value = sol.objective
        duals = extract_duals(sol, master)
        slowdown = len(gaps) > state.slowdown_window and (
            (gaps[-state.slowdown_window - 1] - gaps[-1]) / state.slowdown_window < state.slowdown_threshold
        )
        full = it % state.cadence == 0 or force_full or slowdown or state.phi >= 1.0
        rnd = partial_pricing_round(state, duals, pg, full, restrictions)
        if rnd.full:
            lb = max(lb, lagrangian_lower_bound(value, rnd.min_reduced_costs))
            if on_full_round is not None:
                on_full_round(lb, value)
        gap = (value - lb) / max(abs(value), 1e-10) if math.isfinite(lb) else math.inf
        if math.isfinite(gap):
            gaps.append(gap)
        added = add_columns(master, rnd.columns)
        log.append({"iteration": it, "rmp": value, "lb": lb, "columns": added, "full": rnd.full})
        if rnd.full and not rnd.columns:
            converged = True
            lb = max(lb, value) if _artificials_zero(master) else lb
            break
        if gap <= config.epsilon:
            converged = True
            break
        if time.monotonic() - t0 > limit:
            break
        # duplicates only: the LP already prices them out, confirm with a full round
        force_full = added == 0
        if added == 0 and rnd.full:
            converged = True
            break
    if len(master.solution.x) != master.ws.n_cols:
        # columns were added after the last solve; keep the primal in sync with the pool
        sol = master.solve()
        if sol.status == LpStatus.OPTIMAL:
            value = sol.objective
    return CGResult(value, min(lb, value), it, converged, False, log)


def _artificials_zero(master: MasterState) -> bool:
    x = master.solution.x
    return all(x[j] <= 1e-9 for j in master.artificial.values())


# ---------------------------------------------------------------------------
# solutions


@dataclass
class Solution:
    algorithm: str
    status: str
    objective: float
    lower_bound: float
    gap: float
    y: dict[str, int]
    x: dict[int, int]
    accepted: dict[str, tuple[int, ...]]
    rejected: list[str]
    passenger_flows: list[tuple[str, int, float]]
    log: list[dict] = field(default_factory=list)
    stats: dict = field(default_factory=dict)
    wall_time: float = 0.0

    def to_dict(self, pg: PreparedGraph, timings: bool = False) -> dict:
        g = pg.graph
        vid = g.vehicle_ids

        def seg_label(a):
            arc = g.arcs[a]
            return f"{vid[arc.vehicle - 1]}:{arc.tail.label}->{arc.head.label}"

        log = [{k: _num(v) for k, v in e.items() if timings or k != "time"} for e in self.log]
        doc = {
            "algorithm": self.algorithm,
            "status": self.status,
            "objective": _num(self.objective),
            "lower_bound": _num(self.lower_bound),
            "gap": _num(self.gap),
            "y": {h: int(v) for h, v in sorted(self.y.items())},
            "x": [{"segment": seg_label(a), "count": int(v)} for a, v in sorted(self.x.items()) if v],
            "accepted": [
                {"request": r, "path": [_arc_label(pg, a) for a in arcs]} for r, arcs in sorted(self.accepted.items())
            ],
            "rejected": sorted(self.rejected),
            "passenger_flows": [
                {"request": r, "path": p, "fraction": _num(v)} for r, p, v in self.passenger_flows if v > 1e-12
            ],
            "log": log,
            "stats": {k: _num(v) for k, v in sorted(self.stats.items())},
        }
        if timings:
            doc["wall_time"] = self.wall_time
        return doc

    def to_json(self, pg: PreparedGraph, timings: bool = False) -> str:
        return json.dumps(self.to_dict(pg, timings), indent=1, sort_keys=True) + "\n"

    @classmethod
    def from_dict(cls, pg: PreparedGraph, doc: Mapping) -> "Solution":
        """Inverse of ``to_dict`` for a solution of the same instance."""
        g = pg.graph
        vid = g.vehicle_ids
        arcs = {_arc_label(pg, a.id): a.id for a in g.arcs}
        segs = {f"{vid[g.arcs[a].vehicle - 1]}:{g.arcs[a].tail.label}->{g.arcs[a].head.label}": a for a in g.segments}
        try:
            x = {a: 0 for a in g.segments}
            x.update({segs[e["segment"]]: int(e["count"]) for e in doc["x"]})
            accepted = {e["request"]: tuple(arcs[l] for l in e["path"]) for e in doc["accepted"]}
        except KeyError as exc:
            raise SolveError(f"solution does not match the instance: unknown label {exc}") from None

        def num(v):
            return float(v) if isinstance(v, str) else v

        flows = [(e["request"], int(e["path"]), float(e["fraction"])) for e in doc["passenger_flows"]]
        return cls(
            doc["algorithm"], doc["status"], num(doc["objective"]), num(doc["lower_bound"]), num(doc["gap"]),
            {h: int(v) for h, v in doc["y"].items()}, x, accepted, list(doc["rejected"]), flows,
            list(doc.get("log", [])), dict(doc.get("stats", {})),
        )


def _num(v):
    if isinstance(v, bool) or not isinstance(v, (float, np.floating)):
        return v
    if math.isinf(v):
        return "inf" if v > 0 else "-inf"
    return round(float(v), 9)


def _arc_label(pg: PreparedGraph, a: int) -> str:
    arc = pg.graph.arcs[a]
    return f"{arc.cls}:{arc.tail.label}->{arc.head.label}"


def _objective(pg: PreparedGraph, y: Mapping[str, int], accepted: Mapping[str, Sequence[int]], rejected) -> float:
    inst, g = pg.instance, pg.graph
    val = sum(inst.costs.vehicle_design_cost(h) * n for h, n in y.items())
    for r, arcs in accepted.items():
        val += inst.request(r).demand * sum(g.arcs[a].cost for a in arcs)
    for r in rejected:
        val += inst.costs.penalty(inst.request(r))
    return val


def _from_master(master: MasterState, xv: np.ndarray, algorithm: str) -> Solution:
    pg = master.pg
    vid = pg.graph.vehicle_ids
    y = {vid[h - 1]: int(round(xv[j])) for h, j in master.y.items()}
    x = {a: int(round(xv[j])) for a, j in master.x.items()}
    chosen: dict[str, Column] = {}
    for col, j in master.z:
        if xv[j] > 0.5 and col.request not in chosen:
            chosen[col.request] = col
    return _assemble(pg, algorithm, y, x, chosen, {k: xv[j] for k, j in master.g.items()})


def _assemble(pg, algorithm, y, x, chosen: Mapping[str, Column], g: Mapping[tuple[str, int], float]) -> Solution:
    accepted = {r: c.arcs for r, c in chosen.items() if not c.is_dummy}
    rejected = [r.id for r in pg.instance.freight_requests if r.id not in accepted]
    flows = [(r, p, float(min(max(v, 0.0), 1.0))) for (r, p), v in sorted(g.items())]
    obj = _objective(pg, y, accepted, rejected)
    return Solution(algorithm, "feasible", obj, -math.inf, math.inf, y, x, accepted, rejected, flows)


def all_rejected(pg: PreparedGraph, algorithm: str, flows: Mapping[tuple[str, int], float] | None = None) -> Solution:
    """The always-available solution: no HTU allocated, every freight request rejected."""
    if flows is None:
        flows = passenger_flows_without_freight(pg)
    y = {h: 0 for h in pg.graph.vehicle_ids}
    x = {a: 0 for a in pg.graph.segments}
    return _assemble(pg, algorithm, y, x, {}, flows)


def passenger_flows_without_freight(pg: PreparedGraph) -> dict[tuple[str, int], float]:
    """Passenger flows meeting the service level when vehicles carry no freight."""
    inst = pg.instance
    b = LpBuilder()
    cols = {}
    for r in inst.passenger_requests:
        for p, _ in enumerate(pg.passenger_paths[r.id]):
            cols[(r.id, p)] = b.add_var(f"g[{r.id},{p}]", -r.demand, 0.0, 1.0)
    for r in inst.passenger_requests:
        if pg.passenger_paths[r.id]:
            b.add_row(f"delta[{r.id}]", {cols[(r.id, p)]: 1.0 for p, _ in enumerate(pg.passenger_paths[r.id])}, upper=1.0)
    load: dict[int, dict[int, float]] = defaultdict(dict)
    for r in inst.passenger_requests:
        for p, path in enumerate(pg.passenger_paths[r.id]):
            for a in path.vehicle_arcs:
                load[a][cols[(r.id, p)]] = load[a].get(cols[(r.id, p)], 0.0) + r.demand
    routes = inst.network.routes
    for a in sorted(load):
        b.add_row(f"cap[{a}]", load[a], upper=routes[pg.graph.arcs[a].vehicle - 1].capacity)
    total = sum(r.demand for r in inst.passenger_requests)
    if not cols:
        served, x = 0.0, None
    else:
        sol = solve_lp(b.build())
        if sol.status != LpStatus.OPTIMAL:
            raise SolveError("passenger flow LP failed")
        served, x = -sol.objective, sol.x
    if served < inst.params.chi * total - 1e-7:
        raise InfeasibleInstance("service level cannot be met even without freight")
    return {k: float(x[j]) for k, j in cols.items()}


# ---------------------------------------------------------------------------
# algorithms


def _prepare(instance: Instance | PreparedGraph) -> PreparedGraph:
    return instance if isinstance(instance, PreparedGraph) else build_graph(instance)


def _new_state(pg: PreparedGraph, config: SolveConfig) -> PricingState:
    return PricingState.for_instance(pg, phi=config.phi, cadence=config.cadence, verify=config.verify_pricing)


def price_and_branch(instance: Instance | PreparedGraph, config: SolveConfig | None = None) -> Solution:
    """Column generation at the root, then branch-and-bound over the generated pool."""
    cfg = config or SolveConfig()
    t0 = time.monotonic()
    pg = _prepare(instance)
    master = build_rmp(pg)
    state = _new_state(pg, cfg)
    fallback = all_rejected(pg, "pnb")
    log: list[dict] = []

    def record(lb, rmp):
        log.append({"phase": "cg", "lb": lb, "rmp": rmp, "ub": fallback.objective, "time": time.monotonic() - t0})

    cg = column_generation(master, cfg, state, cfg.time_limit - cfg.branch_reserve, on_full_round=record)
    if cg.infeasible:
        raise InfeasibleInstance("root master is infeasible")
    mip, start = fix_and_integerize(master)
    remaining = max(cfg.time_limit - (time.monotonic() - t0), 1e-3)
    res = branch_and_bound(mip, BnbConfig(time_limit=remaining, gap_tolerance=cfg.mip_gap, start=start))
    if res.x is None:
        sol = fallback
        sol.status = "time_limit"
    else:
        sol = _from_master(master, res.x, "pnb")
        sol.status = "optimal" if res.status == "optimal" else "time_limit"
    sol.lower_bound = min(cg.lower_bound, sol.objective)
    sol.gap = integrality_gap(sol.objective, sol.lower_bound)
    log.append({"phase": "branch", "lb": sol.lower_bound, "ub": sol.objective, "nodes": res.nodes, "time": time.monotonic() - t0})
    sol.log = log
    sol.stats = {
        "columns": master.n_columns,
        "duplicates": master.skipped,
        "pricing_calls": state.calls,
        "cg_iterations": cg.iterations,
        "nodes": res.nodes,
        "pricing_mismatches": len(state.mismatches),
    }
    sol.wall_time = time.monotonic() - t0
    return sol


@dataclass(order=True)
class BnPNode:
    parent_lb: float
    seq: int
    lower: dict[int, float] = field(compare=False, default_factory=dict)
    upper: dict[int, float] = field(compare=False, default_factory=dict)
    restrictions: Restrictions = field(compare=False, default_factory=Restrictions)
    lb: float = field(compare=False, default=-math.inf)
    status: str = field(compare=False, default="open")

    @property
    def consistent(self) -> bool:
        return all(self.lower.get(j, 0.0) <= self.upper.get(j, math.inf) for j in set(self.lower) | set(self.upper))


def _apply_node(master: MasterState, node: BnPNode, root_bounds) -> None:
    lo0, hi0 = root_bounds
    design = list(master.y.values()) + list(master.x.values())
    master.ws.set_bounds(
        design,
        [node.lower.get(j, lo0[j]) for j in design],
        [node.upper.get(j, hi0[j]) for j in design],
    )
    zs = [j for _, j in master.z]
    master.ws.set_bounds(zs, [0.0] * len(zs), [math.inf if node.restrictions.allows(c) else 0.0 for c, _ in master.z])
    arts = [master.artificial[r] for r in sorted(master.artificial)]
    master.ws.set_bounds(
        arts, [0.0] * len(arts), [math.inf if node.restrictions.required.get(r) else 0.0 for r in sorted(master.artificial)]
    )


def _segment_flows(master: MasterState, xv: np.ndarray) -> dict[tuple[str, int], float]:
    flow: dict[tuple[str, int], float] = defaultdict(float)
    for col, j in master.z:
        if xv[j] > 1e-12:
            for s in col.segments:
                flow[(col.request, s)] += xv[j]
    return flow


def branch_and_price(instance: Instance | PreparedGraph, config: SolveConfig | None = None) -> Solution:
    """Best-first branching on design variables with column generation at every node.

    When all y and x are integral but some request splits over paths with
    different segments, the node branches on that request's use of a segment.
    """
    cfg = config or SolveConfig()
    t0 = time.monotonic()
    pg = _prepare(instance)
    master = build_rmp(pg)
    state = _new_state(pg, cfg)
    root_bounds = master.ws.bounds()
    best = all_rejected(pg, "bnp")
    ub = best.objective
    log: list[dict] = []
    heap: list[BnPNode] = [BnPNode(-math.inf, 0)]
    seq, nodes = 1, 0
    global_lb = -math.inf
    status = "optimal"
    tol = cfg.epsilon

    def prunable(bound):
        return bound >= ub - tol * max(abs(ub), 1e-10)

    def deadline():
        return cfg.time_limit - (time.monotonic() - t0)

    def note(kind, **extra):
        open_lbs = [n.parent_lb for n in heap]
        nonlocal global_lb
        current = min(open_lbs + [ub]) if open_lbs else ub
        global_lb = max(global_lb, current)
        log.append({"phase": kind, "lb": global_lb, "ub": ub, "columns": master.n_columns, "nodes": nodes, "time": time.monotonic() - t0, **extra})

    while heap:
        if deadline() <= 0:
            status = "time_limit"
            break
        node = heapq.heappop(heap)
        if prunable(node.parent_lb) or not node.consistent:
            note("prune")
            continue
        nodes += 1
        _apply_node(master, node, root_bounds)

        def on_full(lb, rmp, _node=node):
            if _node.seq == 0:
                log.append({"phase": "cg", "lb": lb, "rmp": rmp, "ub": ub, "columns": master.n_columns, "nodes": nodes, "time": time.monotonic() - t0})

        slice_ = min(cfg.node_cg_time, max(deadline(), 1e-3))
        cg = column_generation(master, cfg, state, slice_, node.parent_lb, node.restrictions, on_full)
        if cg.infeasible or not _artificials_zero(master):
            # artificial slack left at the bottom means no admissible path mix exists
            node.status = "infeasible"
            note("infeasible")
            continue
        node.lb = max(node.parent_lb, cg.lower_bound)
        if prunable(node.lb):
            note("prune")
            continue
        xv = master.solution.x
        yv = {h: xv[j] for h, j in master.y.items()}
        xs = {a: xv[j] for a, j in master.x.items()}
        frac_y = any(abs(v - round(v)) > INT_TOL for v in yv.values())
        frac_x = any(abs(v - round(v)) > INT_TOL for v in xs.values())
        seg_flow = _segment_flows(master, xv)
        frac_f = sorted(k for k, v in seg_flow.items() if abs(v - round(v)) > INT_TOL)

        if not (frac_y or frac_x or frac_f):
            # each request's positive paths share their segments: pick the cheapest
            chosen: dict[str, Column] = {}
            for col, j in master.z:
                if xv[j] > 1e-9 and (col.request not in chosen or col.cost < chosen[col.request].cost):
                    chosen[col.request] = col
            cand = _assemble(pg, "bnp", {pg.graph.vehicle_ids[h - 1]: int(round(v)) for h, v in yv.items()},
                             {a: int(round(v)) for a, v in xs.items()}, chosen, {k: xv[j] for k, j in master.g.items()})
            if cand.objective < ub - 1e-9:
                best, ub = cand, cand.objective
            if not cg.converged:
                status = "time_limit"
            note("integral")
            continue

        if deadline() > 0:
            mip, start = fix_and_integerize(master)
            res = branch_and_bound(mip, BnbConfig(time_limit=max(min(cfg.node_ub_time, deadline()), 1e-3), gap_tolerance=cfg.mip_gap, start=start))
            if res.x is not None and res.objective < ub - 1e-9:
                cand = _from_master(master, res.x, "bnp")
                if cand.objective < ub - 1e-9:
                    best, ub = cand, cand.objective

        children = _branch(master, node, yv, xs, frac_y, frac_x, frac_f, seg_flow, xv)
        for child in children:
            child.parent_lb = node.lb
            child.seq = seq
            seq += 1
            heapq.heappush(heap, child)
        note("branch")

    if heap and status == "optimal":
        status = "time_limit"
    open_lbs = [n.parent_lb for n in heap]
    lb = min(open_lbs + [ub]) if status != "optimal" else ub
    lb = max(lb, global_lb) if status != "optimal" else ub
    best.algorithm = "bnp"
    best.status = status
    best.lower_bound = min(lb, best.objective)
    best.gap = integrality_gap(best.objective, best.lower_bound)
    best.log = log
    best.stats = {
        "columns": master.n_columns,
        "duplicates": master.skipped,
        "pricing_calls": state.calls,
        "nodes": nodes,
        "pricing_mismatches": len(state.mismatches),
    }
    best.wall_time = time.monotonic() - t0
    return best


def _branch(master, node, yv, xs, frac_y, frac_x, frac_f, seg_flow, xv) -> list[BnPNode]:
    def child(lower=None, upper=None, restrictions=None):
        lo = dict(node.lower)
        hi = dict(node.upper)
        lo.update(lower or {})
        hi.update(upper or {})
        return BnPNode(0.0, 0, lo, hi, restrictions or node.restrictions)

    if frac_y:
        h = select_branching_variable(yv)
        j, v = master.y[h], yv[h]
    elif frac_x:
        ids = sorted(xs)
        k = most_fractional(np.array([xs[a] for a in ids]), np.arange(len(ids)))
        j, v = master.x[ids[k]], xs[ids[k]]
    else:
        # most fractional request/segment pair, lowest pair on ties
        best = -1.0
        for k in frac_f:
            d = min(seg_flow[k] - math.floor(seg_flow[k]), math.ceil(seg_flow[k]) - seg_flow[k])
            if d > best + 1e-12:
                best, (r, s) = d, k
        rs = node.restrictions
        forbid = Restrictions(
            {**rs.forbidden, r: rs.forbidden.get(r, frozenset()) | {s}}, dict(rs.required)
        )
        require = Restrictions(
            dict(rs.forbidden), {**rs.required, r: tuple(sorted(set(rs.required.get(r, ())) | {s}))}
        )
        return [child(restrictions=forbid), child(restrictions=require)]
    return [child(upper={j: math.floor(v)}), child(lower={j: math.ceil(v)})]


def solve_arc_mip(instance: Instance | PreparedGraph, config: SolveConfig | None = None) -> Solution:
    """Branch-and-bound on the compact arc formulation."""
    cfg = config or SolveConfig()
    t0 = time.monotonic()
    pg = _prepare(instance)
    arc = build_arc_mip(pg)
    fallback = all_rejected(pg, "mip")
    start = np.zeros(arc.lp.n_cols)
    for (r, p), j in arc.g.items():
        start[j] = fallback_flow(fallback, r, p)
    for r in pg.instance.freight_requests:
        start[arc.f[(r.id, pg.graph.dummy[r.id])]] = 1.0
    res = branch_and_bound(arc.lp, BnbConfig(time_limit=cfg.time_limit, gap_tolerance=cfg.mip_gap, start=start))
    if res.x is None:
        sol = fallback
        sol.status = "time_limit" if res.status == "time_limit" else res.status
        sol.lower_bound = res.bound if math.isfinite(res.bound) else -math.inf
    else:
        xv = res.x
        vid = pg.graph.vehicle_ids
        y = {vid[h - 1]: int(round(xv[j])) for h, j in arc.y.items()}
        x = {a: int(round(xv[j])) for a, j in arc.x.items()}
        chosen = {}
        for r in pg.instance.freight_requests:
            chosen[r.id] = make_column(pg, r.id, _trace(pg, r, {a for a in pg.freight_arcs if xv[arc.f[(r.id, a)]] > 0.5}))
        sol = _assemble(pg, "mip", y, x, chosen, {k: xv[j] for k, j in arc.g.items()})
        sol.status = res.status
        sol.lower_bound = min(res.bound, sol.objective)
    sol.gap = integrality_gap(sol.objective, sol.lower_bound) if math.isfinite(sol.lower_bound) else math.inf
    sol.log = [{"phase": "branch", "lb": b, "ub": u, "nodes": i + 1} for i, (b, u) in enumerate(res.history)]
    sol.stats = {"nodes": res.nodes, "variables": arc.lp.n_cols, "rows": arc.lp.n_rows}
    sol.wall_time = time.monotonic() - t0
    return sol


def fallback_flow(sol: Solution, r: str, p: int) -> float:
    for rr, pp, v in sol.passenger_flows:
        if rr == r and pp == p:
            return v
    return 0.0


def _trace(pg: PreparedGraph, request, used: set[int]) -> tuple[int, ...]:
    """Origin-to-destination path through the used arcs; detached cycles are dropped."""
    out = defaultdict(list)
    for a in sorted(used):
        out[pg.graph.arcs[a].tail].append(a)
    v, dst = origin_vertex(request), destination_vertex(request)
    path = []
    seen = set()
    while v != dst:
        nxt = [a for a in out[v] if a not in seen]
        if not nxt:
            raise SolveError(f"freight flow of request {request.id} is not a path")
        a = nxt[0]
        seen.add(a)
        path.append(a)
        v = pg.graph.arcs[a].head
    return tuple(path)


ALGORITHMS = {"mip": solve_arc_mip, "pnb": price_and_branch, "bnp": branch_and_price}


def solve(instance: Instance | PreparedGraph, algorithm: str = "pnb", config: SolveConfig | None = None) -> Solution:
    if algorithm not in ALGORITHMS:
        raise SolveError(f"unknown algorithm {algorithm!r}; choose from {', '.join(ALGORITHMS)}")
    return ALGORITHMS[algorithm](instance, config)


# ---------------------------------------------------------------------------
# independent feasibility check


def audit(pg: PreparedGraph, sol: Solution, tol: float = 1e-6) -> list[str]:
    """Re-check a solution against the raw instance; returns the violations found."""
    inst, g = pg.instance, pg.graph
    out: list[str] = []
    routes = {r.id: r for r in inst.network.routes}
    vid = g.vehicle_ids
    for h, n in sol.y.items():
        if h not in routes:
            out.append(f"unknown vehicle {h}")
        elif not 0 <= n <= routes[h].units:
            out.append(f"vehicle {h}: {n} HTUs outside [0, {routes[h].units}]")
    for a, n in sol.x.items():
        arc = g.arcs[a]
        if arc.cls != SEGMENT:
            out.append(f"x on non-segment arc {a}")
            continue
        if n < 0 or n > sol.y.get(vid[arc.vehicle - 1], 0):
            out.append(f"segment {a}: x={n} exceeds y of its vehicle")
    freight_ids = {r.id for r in inst.freight_requests}
    if set(sol.accepted) & set(sol.rejected) or set(sol.accepted) | set(sol.rejected) != freight_ids:
        out.append("accepted and rejected do not partition the freight requests")
    load: dict[int, float] = defaultdict(float)
    for rid, arcs in sol.accepted.items():
        r = inst.request(rid)
        v = origin_vertex(r)
        for a in arcs:
            arc = g.arcs[a]
            ok_class = (
                arc.cls in (SEGMENT,)
                or (arc.cls in ("A", "E", DUMMY) and arc.request == rid)
                or (arc.cls in ("0", "T") and g.is_terminal_rep(arc.tail) and g.is_terminal_rep(arc.head))
            )
            if arc.tail != v or not ok_class:
                out.append(f"request {rid}: arc {a} breaks its path")
                break
            v = arc.head
            if arc.cls == SEGMENT:
                load[a] += r.demand
        if v != destination_vertex(r):
            out.append(f"request {rid}: path does not reach its destination")
        inner = [g.arcs[a].head.time for a in arcs[:-1]]
        if inner and (min(inner) < r.earliest or max(inner) > r.latest):
            out.append(f"request {rid}: path leaves its time window")
        if len(set(arcs)) != len(arcs):
            out.append(f"request {rid}: path repeats an arc")
    for a, q in load.items():
        cap = routes[vid[g.arcs[a].vehicle - 1]].unit_capacity * sol.x.get(a, 0)
        if q > cap + tol:
            out.append(f"segment {a}: freight {q:g} over allocated capacity {cap:g}")
    served = 0.0
    per_req: dict[str, float] = defaultdict(float)
    pass_load: dict[int, float] = defaultdict(float)
    for rid, p, v in sol.passenger_flows:
        r = inst.request(rid)
        if v < -tol:
            out.append(f"passenger {rid}: negative flow")
        per_req[rid] += v
        served += r.demand * v
        path = pg.passenger_paths[rid][p]
        if v > tol and (path.start < r.earliest or path.end > r.latest):
            out.append(f"passenger {rid}: path {p} outside the time window")
        for u, w in zip(path.vertices[1:-2], path.vertices[2:-1]):
            if u.layer != 0 and u.layer == w.layer:
                pass_load[g.structural_arc(u, w)] += r.demand * v
    for rid, v in per_req.items():
        if v > 1 + tol:
            out.append(f"passenger {rid}: flow {v:g} above 1")
    total = sum(r.demand for r in inst.passenger_requests)
    if served < inst.params.chi * total - tol:
        out.append(f"service level {served:g} below {inst.params.chi * total:g}")
    for a in (arc for arc in g.arcs if arc.cls == "V"):
        route = routes[vid[a.vehicle - 1]]
        freight_units = sol.x.get(g.mu[a.id], 0) if a.id in g.mu else 0
        if pass_load[a.id] + route.unit_capacity * freight_units > route.capacity + tol:
            out.append(f"vehicle arc {a.id}: passenger capacity exceeded")
    obj = _objective(pg, sol.y, sol.accepted, sol.rejected)
    if abs(obj - sol.objective) > tol * max(1.0, abs(obj)):
        out.append(f"objective {sol.objective} differs from recomputed {obj}")
    return out

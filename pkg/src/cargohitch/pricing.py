"""Shortest-path pricing of freight paths and the partial-pricing scheduler."""

from __future__ import annotations

import heapq
import math
from collections import deque
from dataclasses import dataclass, field
from typing import Iterable, Mapping

from .formulations import Column, DualValues, make_column
from .graph import SEGMENT, PreparedGraph, Vertex, destination_vertex, heuristic_w, origin_vertex
from .model import Request

NEGATIVE = -1e-9


class PricingError(RuntimeError):
    pass


def reduced_cost(column: Column, duals: DualValues, demand: float) -> float:
    """q * (routing cost - sum of alpha over its segments) - eta."""
    alpha = sum(duals.alpha.get(a, 0.0) for a in column.segments)
    return demand * (column.cost - alpha) - duals.eta[column.request]


def adapted_costs(pg: PreparedGraph, duals: DualValues) -> dict[int, float]:
    g = pg.graph
    return {a: g.arcs[a].cost - (duals.alpha.get(a, 0.0) if g.arcs[a].cls == SEGMENT else 0.0) for a in pg.freight_arcs}


def shortest_path(
    pg: PreparedGraph,
    request: Request,
    cost: Mapping[int, float],
    heuristic: Mapping[Vertex, float] | None = None,
    source: Vertex | None = None,
    target: Vertex | None = None,
    forbidden: frozenset[int] = frozenset(),
) -> tuple[tuple[int, ...], float]:
    """A* from the request's origin to its destination; Dijkstra when ``heuristic`` is None.

    Closed vertices are reopened when a cheaper label appears, so the result
    is optimal for any admissible heuristic, consistent or not. Returns an
    infinite cost when ``target`` cannot be reached.
    """
    src = source if source is not None else origin_vertex(request)
    dst = target if target is not None else destination_vertex(request)
    h = heuristic or {}
    dist: dict[Vertex, float] = {src: 0.0}
    pred: dict[Vertex, int] = {}
    heap = [(h.get(src, 0.0), 0, src)]
    seq = 1
    while heap:
        f, _, v = heapq.heappop(heap)
        d = dist[v]
        if f > d + h.get(v, 0.0) + 1e-12:
            continue  # stale entry
        if v == dst:
            break
        for a in pg.out_arcs.get(v, ()):
            arc = pg.graph.arcs[a]
            if (arc.request is not None and arc.request != request.id) or a in forbidden:
                continue
            est = h.get(arc.head, 0.0)
            if math.isinf(est):
                continue
            nd = d + cost[a]
            if nd < dist.get(arc.head, math.inf) - 1e-12:
                dist[arc.head] = nd
                pred[arc.head] = a
                heapq.heappush(heap, (nd + est, seq, arc.head))
                seq += 1
    if dst not in dist:
        return (), math.inf
    path = []
    v = dst
    while v != src:
        a = pred[v]
        path.append(a)
        v = pg.graph.arcs[a].tail
    return tuple(reversed(path)), dist[dst]


def constrained_path(
    pg: PreparedGraph,
    request: Request,
    cost: Mapping[int, float],
    heuristic: Mapping[Vertex, float] | None,
    forbidden: frozenset[int] = frozenset(),
    required: tuple[int, ...] = (),
) -> tuple[tuple[int, ...], float]:
    """Cheapest path avoiding ``forbidden`` arcs and traversing every ``required`` arc.

    Required arcs strictly advance in time, so they are visited in time order
    and the concatenated legs cannot share a vertex.
    """
    if not required:
        return shortest_path(pg, request, cost, heuristic, forbidden=forbidden)
    arcs = sorted(required, key=lambda a: (pg.graph.arcs[a].tail.time, pg.graph.arcs[a].head.time))
    for a, b in zip(arcs, arcs[1:]):
        if pg.graph.arcs[a].head.time > pg.graph.arcs[b].tail.time:
            return (), math.inf
    path: list[int] = []
    total = 0.0
    here = origin_vertex(request)
    for a in arcs:
        arc = pg.graph.arcs[a]
        leg, c = shortest_path(pg, request, cost, None, source=here, target=arc.tail, forbidden=forbidden)
        if math.isinf(c):
            return (), math.inf
        path.extend(leg)
        path.append(a)
        total += c + cost[a]
        here = arc.head
    leg, c = shortest_path(pg, request, cost, heuristic, source=here, forbidden=forbidden)
    if math.isinf(c):
        return (), math.inf
    return tuple(path) + leg, total + c


@dataclass
class Restrictions:
    """Branching decisions on per-request segment usage."""

    forbidden: dict[str, frozenset[int]] = field(default_factory=dict)
    required: dict[str, tuple[int, ...]] = field(default_factory=dict)

    def allows(self, column: Column) -> bool:
        segs = set(column.segments)
        if segs & self.forbidden.get(column.request, frozenset()):
            return False
        return set(self.required.get(column.request, ())) <= segs


@dataclass
class PricingResult:
    column: Column
    reduced_cost: float

    @property
    def negative(self) -> bool:
        return self.reduced_cost < NEGATIVE


@dataclass
class PricingState:
    queue: deque[str]
    phi: float = 1.0
    cadence: int = 5
    slowdown_threshold: float = 1e-4
    slowdown_window: int = 5
    verify: bool = False
    heuristics: dict[str, dict[Vertex, float]] = field(default_factory=dict)
    calls: int = 0
    columns_found: int = 0
    mismatches: list[tuple[str, float, float]] = field(default_factory=list)

    def __post_init__(self):
        if not 0.0 < self.phi <= 1.0:
            raise PricingError("pricing strength must lie in (0, 1]")
        if self.cadence < 1:
            raise PricingError("full-pricing cadence must be at least 1")

    @classmethod
    def for_instance(cls, pg: PreparedGraph, **kwargs) -> "PricingState":
        return cls(deque(r.id for r in pg.instance.freight_requests), **kwargs)

    def heuristic(self, pg: PreparedGraph, request: Request) -> dict[Vertex, float]:
        if request.id not in self.heuristics:
            self.heuristics[request.id] = heuristic_w(pg.graph, pg.wprime, request)
        return self.heuristics[request.id]


def solve_pricing(
    pg: PreparedGraph,
    duals: DualValues,
    request: Request,
    heuristic: Mapping[Vertex, float] | None = None,
    cost: Mapping[int, float] | None = None,
    restrictions: Restrictions | None = None,
) -> PricingResult | None:
    """Minimum reduced-cost path of ``request``.

    Without restrictions a path always exists (the dummy path); with them the
    result is None when no admissible path is left.
    """
    cost = cost if cost is not None else adapted_costs(pg, duals)
    if restrictions is None:
        arcs, value = shortest_path(pg, request, cost, heuristic)
    else:
        arcs, value = constrained_path(
            pg,
            request,
            cost,
            heuristic,
            restrictions.forbidden.get(request.id, frozenset()),
            restrictions.required.get(request.id, ()),
        )
    if math.isinf(value):
        if restrictions is None:
            raise PricingError(f"request {request.id}: destination unreachable, dummy arc missing")
        return None
    col = make_column(pg, request.id, arcs)
    return PricingResult(col, request.demand * value - duals.eta[request.id])


def price_request(
    pg: PreparedGraph,
    duals: DualValues,
    request: Request,
    heuristic: Mapping[Vertex, float] | None = None,
) -> PricingResult | None:
    """The best path if its reduced cost is negative, else None."""
    res = solve_pricing(pg, duals, request, heuristic)
    return res if res is not None and res.negative else None


@dataclass
class RoundResult:
    columns: list[Column]
    solved: int
    full: bool
    min_reduced_costs: dict[str, float]


def partial_pricing_round(
    state: PricingState,
    duals: DualValues,
    pg: PreparedGraph,
    full: bool = False,
    restrictions: Restrictions | None = None,
) -> RoundResult:
    """Price requests in queue order until enough negative columns are found.

    A full round prices every request. Each priced request moves to the back
    of the queue. The round counts as full whenever every request was priced.
    """
    n = len(state.queue)
    target = n if full else math.ceil(state.phi * n)
    cost = adapted_costs(pg, duals)
    columns: list[Column] = []
    mins: dict[str, float] = {}
    solved = 0
    while solved < n and (full or len(columns) < target):
        rid = state.queue.popleft()
        state.queue.append(rid)
        req = pg.instance.request(rid)
        res = solve_pricing(pg, duals, req, state.heuristic(pg, req), cost, restrictions)
        state.calls += 1
        solved += 1
        if res is None:
            continue
        if state.verify:
            if restrictions is None:
                _, exact = shortest_path(pg, req, cost, None)
            else:
                _, exact = constrained_path(
                    pg, req, cost, None,
                    restrictions.forbidden.get(rid, frozenset()), restrictions.required.get(rid, ()),
                )
            found = res.reduced_cost + duals.eta[rid]
            if abs(exact * req.demand - found) > 1e-9 * max(1.0, abs(found)):
                state.mismatches.append((rid, found, exact * req.demand))
        mins[rid] = res.reduced_cost
        if res.negative:
            columns.append(res.column)
    state.columns_found += len(columns)
    return RoundResult(columns, solved, solved == n, mins)


def lagrangian_lower_bound(rmp_value: float, reduced_costs: Mapping[str, float] | Iterable[float], full: bool = True) -> float:
    """RMP value plus the most negative reduced cost of every request."""
    if not full:
        raise PricingError("the Lagrangian bound needs the exact minimum of every pricing problem")
    values = reduced_costs.values() if isinstance(reduced_costs, Mapping) else reduced_costs
    return rmp_value + sum(min(0.0, v) for v in values)

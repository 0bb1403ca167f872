"""Partially time-expanded, multi-layered transit graph and its preprocessing.

Layer 0 is the holding layer; vehicle ``network.routes[h - 1]`` lives in
layer ``h``. Origins and destinations of requests are separate vertices.
"""

from __future__ import annotations

import json
import logging
import math
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Iterable, NamedTuple

import networkx as nx
import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import dijkstra

from .model import CostModel, Instance, PTNetwork, Request

log = logging.getLogger(__name__)

VEHICLE, HOLDING, TRANSIT, ACCESS, EGRESS, DUMMY, SEGMENT = "V", "0", "T", "A", "E", "D", "F"
ARC_CLASSES = (VEHICLE, HOLDING, TRANSIT, ACCESS, EGRESS, DUMMY, SEGMENT)


class GraphError(ValueError):
    pass


class Vertex(NamedTuple):
    kind: str  # "o", "d" or "s"
    key: str  # request id for o/d, stop id for s
    time: int
    layer: int = 0

    @property
    def label(self) -> str:
        if self.kind == "s":
            return f"{self.key}@{self.time}@{self.layer}"
        return f"{self.kind}:{self.key}@{self.time}"


@dataclass(frozen=True)
class Arc:
    id: int
    tail: Vertex
    head: Vertex
    cls: str
    cost: float
    vehicle: int | None = None
    request: str | None = None


@dataclass
class ExpandedGraph:
    network: PTNetwork
    vertices: set[Vertex] = field(default_factory=set)
    arcs: list[Arc] = field(default_factory=list)
    times_at_stop: dict[str, list[int]] = field(default_factory=dict)
    # contraction: V-arc id -> F-arc id, F-arc id -> contracted V-arc ids
    mu: dict[int, int] = field(default_factory=dict)
    segments: dict[int, tuple[int, ...]] = field(default_factory=dict)
    dummy: dict[str, int] = field(default_factory=dict)
    access: dict[str, list[int]] = field(default_factory=dict)
    egress: dict[str, list[int]] = field(default_factory=dict)
    _structural: dict[tuple[Vertex, Vertex], int] = field(default_factory=dict)

    @property
    def vehicle_ids(self) -> list[str]:
        return [r.id for r in self.network.routes]

    def layer_of(self, vehicle_id: str) -> int:
        return self.vehicle_ids.index(vehicle_id) + 1

    def add_arc(self, tail: Vertex, head: Vertex, cls: str, cost: float, vehicle=None, request=None) -> int:
        arc = Arc(len(self.arcs), tail, head, cls, float(cost), vehicle, request)
        self.arcs.append(arc)
        if cls in (VEHICLE, HOLDING, TRANSIT):
            self._structural[(tail, head)] = arc.id
        return arc.id

    def arcs_of(self, *classes: str) -> list[Arc]:
        return [a for a in self.arcs if a.cls in classes]

    def structural_arc(self, tail: Vertex, head: Vertex) -> int:
        return self._structural[(tail, head)]

    def is_terminal_rep(self, v: Vertex) -> bool:
        return v.kind == "s" and v.key in self.network.terminals

    @property
    def terminal_reps(self) -> list[Vertex]:
        """FT representations across all layers."""
        return sorted(v for v in self.vertices if self.is_terminal_rep(v))

    @property
    def contracted(self) -> list[int]:
        return sorted(self.mu)

    @property
    def uncontracted(self) -> list[int]:
        return [a.id for a in self.arcs if a.cls == VEHICLE and a.id not in self.mu]

    def freight_arc_ids(self) -> list[int]:
        """Arcs available to freight flows."""
        out = []
        for a in self.arcs:
            if a.cls in (SEGMENT, DUMMY):
                out.append(a.id)
            elif a.cls in (ACCESS, EGRESS) and a.request is not None:
                out.append(a.id)
            elif a.cls in (HOLDING, TRANSIT) and self.is_terminal_rep(a.tail) and self.is_terminal_rep(a.head):
                out.append(a.id)
        return out

    def freight_vertices(self, freight: Iterable[Request]) -> list[Vertex]:
        """Vertices carrying a flow-conservation row: freight origins, destinations, FT reps."""
        out = []
        for r in freight:
            out.append(origin_vertex(r))
            out.append(destination_vertex(r))
        return out + self.terminal_reps

    def to_json(self) -> str:
        nodes = sorted(v.label for v in self.vertices)
        arcs = [
            {
                "id": a.id,
                "tail": a.tail.label,
                "head": a.head.label,
                "class": a.cls,
                "cost": a.cost,
                "vehicle": None if a.vehicle is None else self.vehicle_ids[a.vehicle - 1],
                "request": a.request,
            }
            for a in self.arcs
        ]
        return json.dumps({"nodes": nodes, "arcs": arcs}, indent=1, sort_keys=True)


def origin_vertex(r: Request) -> Vertex:
    return Vertex("o", r.id, r.earliest, 0)


def destination_vertex(r: Request) -> Vertex:
    return Vertex("d", r.id, r.latest, 0)


def xi(r: Request, v: Vertex) -> int:
    """Vertex demand of freight request ``r``: +1 at its origin, -1 at its destination."""
    if v == origin_vertex(r):
        return 1
    if v == destination_vertex(r):
        return -1
    return 0


def expand(network: PTNetwork, requests: Iterable[Request], costs: CostModel | None = None) -> ExpandedGraph:
    """Vehicle layers, holding layer, vehicle/holding/transit arcs and request O/D vertices."""
    rate = costs.routing_rate if costs is not None else 0.0406
    c_transit = costs.transit_cost if costs is not None else 0.0
    g = ExpandedGraph(network=network)
    times: dict[str, set[int]] = defaultdict(set)
    for h, route in enumerate(network.routes, start=1):
        layer = [Vertex("s", s, t, h) for s, t in route.stops]
        g.vertices.update(layer)
        for s, t in route.stops:
            times[s].add(t)
        for i, j in zip(layer, layer[1:]):
            g.add_arc(i, j, VEHICLE, rate * network.distance_km(i.key, j.key), vehicle=h)
    g.times_at_stop = {s: sorted(ts) for s, ts in sorted(times.items())}
    for s, ts in g.times_at_stop.items():
        hold = [Vertex("s", s, t, 0) for t in ts]
        g.vertices.update(hold)
        for i, j in zip(hold, hold[1:]):
            g.add_arc(i, j, HOLDING, 0.0)
    for h, route in enumerate(network.routes, start=1):
        for s, t in route.stops:
            i, j = Vertex("s", s, t, h), Vertex("s", s, t, 0)
            g.add_arc(i, j, TRANSIT, c_transit)
            g.add_arc(j, i, TRANSIT, c_transit)
    for r in requests:
        g.vertices.add(origin_vertex(r))
        g.vertices.add(destination_vertex(r))
    return g


def add_dummy_arcs(graph: ExpandedGraph, freight: Iterable[Request], costs: CostModel) -> ExpandedGraph:
    """One rejection arc per freight request, priced at penalty / demand."""
    for r in freight:
        if not r.is_freight:
            continue
        o, d = origin_vertex(r), destination_vertex(r)
        if o not in graph.vertices or d not in graph.vertices:
            raise GraphError(f"request {r.id} has no origin/destination vertices")
        graph.dummy[r.id] = graph.add_arc(o, d, DUMMY, costs.penalty(r) / r.demand, request=r.id)
    return graph


def contract_segments(graph: ExpandedGraph, network: PTNetwork | None = None) -> ExpandedGraph:
    """Add one freight segment arc per pair of consecutive FTs on every route."""
    network = network or graph.network
    for h, route in enumerate(network.routes, start=1):
        ft_pos = [i for i, (s, _) in enumerate(route.stops) if s in network.terminals]
        if len(ft_pos) == 1:
            raise GraphError(f"route {route.id} visits exactly one freight terminal")
        for a, b in zip(ft_pos, ft_pos[1:]):
            verts = [Vertex("s", s, t, h) for s, t in route.stops[a : b + 1]]
            v_arcs = [graph.structural_arc(i, j) for i, j in zip(verts, verts[1:])]
            cost = sum(graph.arcs[k].cost for k in v_arcs)
            f = graph.add_arc(verts[0], verts[-1], SEGMENT, cost, vehicle=h)
            graph.segments[f] = tuple(v_arcs)
            for k in v_arcs:
                graph.mu[k] = f
    return graph


def nearest_terminals(network: PTNetwork, point: tuple[float, float], count: int) -> list[tuple[str, float]]:
    idx = network.stop_index
    ranked = sorted((math.dist(point, (idx[s].x, idx[s].y)), s) for s in network.terminals)
    return [(s, d) for d, s in ranked[:count]]


def prune_access_egress(graph: ExpandedGraph, instance: Instance) -> ExpandedGraph:
    """Drop passenger O/D vertices and connect freight O/D to their nearest FTs.

    An origin gets an access arc to the earliest holding representation of each
    of its ``iota`` nearest terminals that leaves at least ``zeta`` seconds to
    get there; destinations symmetrically use the latest representation.
    """
    costs = instance.costs
    iota = instance.params.iota
    for r in instance.passenger_requests:
        graph.vertices.discard(origin_vertex(r))
        graph.vertices.discard(destination_vertex(r))
    for r in instance.freight_requests:
        o, d = origin_vertex(r), destination_vertex(r)
        graph.access[r.id] = []
        graph.egress[r.id] = []
        for s, dist in nearest_terminals(graph.network, r.origin, iota):
            zeta = instance.zeta(r, dist)
            ts = [t for t in graph.times_at_stop.get(s, []) if t - r.earliest >= zeta and t <= r.latest]
            if ts:
                graph.access[r.id].append(
                    graph.add_arc(o, Vertex("s", s, ts[0], 0), ACCESS, costs.access_cost, request=r.id)
                )
        for s, dist in nearest_terminals(graph.network, r.destination, iota):
            zeta = instance.zeta(r, dist)
            ts = [t for t in graph.times_at_stop.get(s, []) if r.latest - t >= zeta and t >= r.earliest]
            if ts:
                graph.egress[r.id].append(
                    graph.add_arc(Vertex("s", s, ts[-1], 0), d, EGRESS, costs.egress_cost, request=r.id)
                )
        if not graph.access[r.id] or not graph.egress[r.id]:
            log.warning("freight request %s has no feasible access or egress arc; only rejection is possible", r.id)
    return graph


@dataclass(frozen=True)
class PassengerPath:
    request: str
    vertices: tuple[Vertex, ...]
    arcs: tuple[int, ...]  # structural arcs traversed (vehicle, holding, transit)
    vehicle_arcs: tuple[int, ...]
    duration: int
    start: int
    end: int


@dataclass
class PassengerPathSet:
    paths: dict[str, list[PassengerPath]]

    @property
    def unserviceable(self) -> list[str]:
        return [r for r, ps in self.paths.items() if not ps]

    def __getitem__(self, rid: str) -> list[PassengerPath]:
        return self.paths[rid]


def _walk_seconds(a: tuple[float, float], b: tuple[float, float], speed: float) -> int:
    return math.ceil(math.dist(a, b) / speed)


def precompute_passenger_paths(graph: ExpandedGraph, instance: Instance) -> PassengerPathSet:
    """Up to k shortest loopless itineraries per passenger request, by travel time.

    Ties are broken by fewer arcs, then lexicographically by vertex sequence.
    Itineraries that wait at their first or last stop are dominated by a later
    access or an earlier egress and are skipped, as are pure walks.
    """
    params = instance.params
    base = nx.DiGraph()
    for a in graph.arcs:
        if a.cls in (VEHICLE, HOLDING):
            base.add_edge(a.tail, a.head, w=a.head.time - a.tail.time, arc=a.id, cls=a.cls)
        elif a.cls == TRANSIT:
            base.add_edge(a.tail, a.head, w=0, arc=a.id, cls=a.cls)
    idx = graph.network.stop_index
    result: dict[str, list[PassengerPath]] = {}
    for r in instance.passenger_requests:
        o, d = origin_vertex(r), destination_vertex(r)
        G = base.copy()
        walk_o, walk_d = {}, {}
        for s, ts in graph.times_at_stop.items():
            p = (idx[s].x, idx[s].y)
            if math.dist(r.origin, p) <= params.max_walk:
                w = _walk_seconds(r.origin, p, params.walk_speed)
                for t in ts:
                    if t - r.earliest >= w:
                        G.add_edge(o, Vertex("s", s, t, 0), w=w, arc=None, cls=ACCESS)
                        walk_o[s] = w
            if math.dist(r.destination, p) <= params.max_walk:
                w = _walk_seconds(r.destination, p, params.walk_speed)
                for t in ts:
                    if r.latest - t >= w:
                        G.add_edge(Vertex("s", s, t, 0), d, w=w, arc=None, cls=EGRESS)
                        walk_d[s] = w
        result[r.id] = _k_shortest(G, o, d, params.k, r, walk_o, walk_d)
    return PassengerPathSet(result)


def _k_shortest(G, o, d, k, r, walk_o, walk_d, examine_limit: int = 200) -> list[PassengerPath]:
    if o not in G or d not in G:
        return []
    accepted: list[tuple[int, int, tuple, PassengerPath]] = []
    try:
        gen = nx.shortest_simple_paths(G, o, d, weight="w")
        for n_seen, verts in enumerate(gen):
            if n_seen >= examine_limit:
                break
            edges = [G.edges[u, v] for u, v in zip(verts, verts[1:])]
            weight = sum(e["w"] for e in edges)
            if len(accepted) >= k and weight > accepted[k - 1][0]:
                break
            inner = edges[1:-1]
            if not any(e["cls"] == VEHICLE for e in inner):
                continue  # never boards a vehicle
            if inner[0]["cls"] == HOLDING or inner[-1]["cls"] == HOLDING:
                continue  # waits at its first or last stop
            arcs = tuple(e["arc"] for e in inner)
            v_arcs = tuple(e["arc"] for e in inner if e["cls"] == VEHICLE)
            start = verts[1].time - walk_o[verts[1].key]
            end = verts[-2].time + walk_d[verts[-2].key]
            path = PassengerPath(r.id, tuple(verts), arcs, v_arcs, weight, start, end)
            accepted.append((weight, len(verts), tuple(verts), path))
            accepted.sort(key=lambda x: x[:3])
    except nx.NetworkXNoPath:
        pass
    return [p for *_, p in accepted[:k]]


def precompute_static_costs(network: PTNetwork, costs: CostModel | None = None) -> dict[tuple[str, str], float]:
    """Lower bounds on FT-to-FT routing cost in the time-collapsed network."""
    rate = costs.routing_rate if costs is not None else 0.0406
    stops = [s.id for s in network.stops]
    pos = {s: i for i, s in enumerate(stops)}
    best: dict[tuple[int, int], float] = {}
    for route in network.routes:
        for (a, _), (b, _) in zip(route.stops, route.stops[1:]):
            key = (pos[a], pos[b])
            c = rate * network.distance_km(a, b)
            if key not in best or c < best[key]:
                best[key] = c
    n = len(stops)
    if best:
        rows, cols = zip(*best)
        # csgraph treats explicit zeros as missing edges; nudge them
        vals = [max(best[k], 1e-300) for k in best]
        mat = csr_matrix((vals, (rows, cols)), shape=(n, n))
    else:
        mat = csr_matrix((n, n))
    dist = dijkstra(mat, directed=True)
    terms = sorted(network.terminals)
    out = {}
    for a in terms:
        for b in terms:
            out[(a, b)] = 0.0 if a == b else float(dist[pos[a], pos[b]])
    return out


def heuristic_w(graph: ExpandedGraph, wprime: dict[tuple[str, str], float], request: Request) -> dict[Vertex, float]:
    """Admissible remaining-cost estimate towards the request's destination."""
    d = destination_vertex(request)
    o = origin_vertex(request)
    entries = [(graph.arcs[a].tail.key, graph.arcs[a].cost) for a in graph.egress.get(request.id, [])]
    est: dict[Vertex, float] = {d: 0.0}
    for v in graph.terminal_reps:
        est[v] = min((wprime.get((v.key, s), math.inf) + c for s, c in entries), default=math.inf)
    via = [graph.arcs[a].cost + est[graph.arcs[a].head] for a in graph.access.get(request.id, [])]
    if request.id in graph.dummy:
        via.append(graph.arcs[graph.dummy[request.id]].cost)
    est[o] = min(via, default=math.inf)
    return est


@dataclass
class PreparedGraph:
    """A fully preprocessed graph plus everything pricing needs."""

    instance: Instance
    graph: ExpandedGraph
    passenger_paths: PassengerPathSet
    wprime: dict[tuple[str, str], float]
    freight_arcs: list[int]
    out_arcs: dict[Vertex, list[int]]
    in_arcs: dict[Vertex, list[int]]

    @property
    def freight_vertices(self) -> list[Vertex]:
        return self.graph.freight_vertices(self.instance.freight_requests)


def build_graph(instance: Instance) -> PreparedGraph:
    g = expand(instance.network, instance.requests, instance.costs)
    add_dummy_arcs(g, instance.freight_requests, instance.costs)
    contract_segments(g, instance.network)
    paths = precompute_passenger_paths(g, instance)
    prune_access_egress(g, instance)
    wprime = precompute_static_costs(instance.network, instance.costs)
    freight_arcs = g.freight_arc_ids()
    out_arcs: dict[Vertex, list[int]] = defaultdict(list)
    in_arcs: dict[Vertex, list[int]] = defaultdict(list)
    for a in freight_arcs:
        arc = g.arcs[a]
        out_arcs[arc.tail].append(a)
        in_arcs[arc.head].append(a)
    return PreparedGraph(instance, g, paths, wprime, freight_arcs, dict(out_arcs), dict(in_arcs))


def arc_cost_array(graph: ExpandedGraph) -> np.ndarray:
    return np.array([a.cost for a in graph.arcs])

"""Utilization series and rejection-share sensitivity sweeps, written as plain CSV."""

from __future__ import annotations

import csv
import io
import logging
import math
from collections import defaultdict
from dataclasses import dataclass, field, fields
from typing import Callable, Iterable, Sequence

import numpy as np

from .costs import EconomicParameters, derive_costs
from .generator import GeneratorConfig, generate_instance, preset
from .graph import SEGMENT, VEHICLE, PreparedGraph, build_graph
from .model import Instance
from .solve import Solution, SolveConfig, solve

log = logging.getLogger(__name__)


class ReportError(ValueError):
    pass


def _fmt(v) -> str:
    if isinstance(v, float):
        if math.isnan(v):
            return "nan"
        return f"{v:.6f}"
    return str(v)


def to_csv(header: Sequence[str], rows: Iterable[Sequence]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_fmt(v) for v in row])
    return buf.getvalue()


# ---------------------------------------------------------------------------
# utilization


TEMPORAL_HEADER = ("bucket_start", "bucket_end", "passenger_volume", "freight_volume", "passenger_share", "freight_share")
SPATIAL_HEADER = ("stop_a", "stop_b", "passenger_volume", "freight_volume")
VEHICLE_HEADER = (
    "vehicle", "from_stop", "departure", "to_stop", "arrival", "segment",
    "passenger_load", "freight_load", "freight_capacity", "capacity",
)


@dataclass
class UtilizationSeries:
    """Rows of the three utilization views; see the *_HEADER constants for columns."""

    temporal: list[tuple] = field(default_factory=list)
    spatial: list[tuple] = field(default_factory=list)
    vehicle: list[tuple] = field(default_factory=list)

    def csv(self) -> dict[str, str]:
        return {
            "temporal.csv": to_csv(TEMPORAL_HEADER, self.temporal),
            "spatial.csv": to_csv(SPATIAL_HEADER, self.spatial),
            "vehicle.csv": to_csv(VEHICLE_HEADER, self.vehicle),
        }


def _vehicle_arcs_of_path(pg: PreparedGraph, arcs: Iterable[int]) -> list[int]:
    g = pg.graph
    out = []
    for a in arcs:
        cls = g.arcs[a].cls
        if cls == SEGMENT:
            out.extend(g.segments[a])
        elif cls == VEHICLE:
            out.append(a)
    return out


def _segment_of(pg: PreparedGraph) -> dict[int, int]:
    return {v: f for f, vs in pg.graph.segments.items() for v in vs}


def utilization_report(solution: Solution, pg: PreparedGraph, bucket: int = 300) -> UtilizationSeries:
    """Temporal, spatial and per-vehicle loads of a solution.

    A request counts toward a time bucket only while it rides a vehicle, so
    waiting and walking time is left out.
    """
    if bucket <= 0:
        raise ReportError("bucket length must be positive")
    g, inst = pg.graph, pg.instance
    routes = inst.network.routes
    # (vehicle arc, demand) traversals per request type
    rides: dict[str, list[tuple[str, list[int], float]]] = {"passenger": [], "freight": []}
    for r, p, frac in solution.passenger_flows:
        if frac > 1e-12:
            q = inst.request(r).demand * frac
            rides["passenger"].append((r, list(pg.passenger_paths[r][p].vehicle_arcs), q))
    for r, arcs in sorted(solution.accepted.items()):
        rides["freight"].append((r, _vehicle_arcs_of_path(pg, arcs), inst.request(r).demand))

    v_arcs = [a for a in g.arcs if a.cls == VEHICLE]
    series = UtilizationSeries()

    # temporal
    if v_arcs:
        t0 = min(a.tail.time for a in v_arcs) // bucket * bucket
        t1 = max(a.head.time for a in v_arcs)
        starts = range(t0, t1 + 1, bucket) if t1 > t0 else [t0]
    else:
        starts = []
    totals = {
        "passenger": sum(r.demand for r in inst.passenger_requests),
        "freight": sum(r.demand for r in inst.freight_requests),
    }
    volume = {k: defaultdict(float) for k in rides}
    for kind, items in rides.items():
        for _, arcs, q in items:
            hit = set()
            for a in arcs:
                arc = g.arcs[a]
                for b in starts:
                    if arc.tail.time < b + bucket and arc.head.time > b:
                        hit.add(b)
            for b in hit:
                volume[kind][b] += q
    for b in starts:
        pv, fv = volume["passenger"][b], volume["freight"][b]
        ps = min(pv / totals["passenger"], 1.0) if totals["passenger"] > 0 else 0.0
        fs = min(fv / totals["freight"], 1.0) if totals["freight"] > 0 else 0.0
        series.temporal.append((b, b + bucket, pv, fv, ps, fs))

    # spatial
    legs: dict[tuple[str, str], list[float]] = defaultdict(lambda: [0.0, 0.0])
    for a in v_arcs:
        legs[tuple(sorted((a.tail.key, a.head.key)))]
    for col, kind in ((0, "passenger"), (1, "freight")):
        for _, arcs, q in rides[kind]:
            for a in arcs:
                arc = g.arcs[a]
                legs[tuple(sorted((arc.tail.key, arc.head.key)))][col] += q
    series.spatial = [(s, t, v[0], v[1]) for (s, t), v in sorted(legs.items())]

    # per vehicle
    load = {k: defaultdict(float) for k in rides}
    for kind, items in rides.items():
        for _, arcs, q in items:
            for a in arcs:
                load[kind][a] += q
    seg = _segment_of(pg)
    vid = g.vehicle_ids
    for a in v_arcs:
        route = routes[a.vehicle - 1]
        f = seg.get(a.id)
        units = solution.x.get(f, 0) if f is not None else 0
        label = f"{g.arcs[f].tail.label}->{g.arcs[f].head.label}" if f is not None else ""
        series.vehicle.append((
            vid[a.vehicle - 1], a.tail.key, a.tail.time, a.head.key, a.head.time, label,
            load["passenger"][a.id], load["freight"][a.id], units * route.unit_capacity, route.capacity,
        ))
    return series


# ---------------------------------------------------------------------------
# sensitivity sweep


TRUCK_EXTERNALITY = (0.05, 0.20, 0.40, 0.60, 0.80, 1.00, 1.20, 1.40, 1.60)
TRANSIT_COST = (0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.8, 1.0, 1.2, 1.4, 1.6, 1.8, 2.0)


@dataclass(frozen=True)
class SweepGrid:
    """Truck externality columns by transit-cost rows, averaged over seeds.

    ``economics`` overrides the remaining economic parameters.
    """

    truck_externality: tuple[float, ...] = TRUCK_EXTERNALITY
    transit_cost: tuple[float, ...] = TRANSIT_COST
    seeds: tuple[int, ...] = (0,)
    economics: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.truck_externality or not self.transit_cost or not self.seeds:
            raise ReportError("sweep axes and seed list must be nonempty")
        if min(self.truck_externality) <= 0 or min(self.transit_cost) <= 0:
            raise ReportError("sweep values must be positive")
        names = {f.name for f in fields(EconomicParameters)} - {"truck_externality", "transit_cost"}
        unknown = set(self.economics) - names
        if unknown:
            raise ReportError(f"unknown economic parameters: {', '.join(sorted(unknown))}")

    @classmethod
    def from_dict(cls, doc: dict) -> "SweepGrid":
        allowed = {f.name for f in fields(cls)}
        unknown = set(doc) - allowed
        if unknown:
            raise ReportError(f"unknown grid keys: {', '.join(sorted(unknown))}")
        kw = {k: tuple(v) if isinstance(v, list) else v for k, v in doc.items()}
        return cls(**kw)

    def economics_for(self, truck: float, transit: float) -> EconomicParameters:
        return EconomicParameters(**{**self.economics, "truck_externality": truck, "transit_cost": transit})


@dataclass
class SweepResult:
    grid: SweepGrid
    shares: np.ndarray  # rows: transit cost, columns: truck externality
    failures: list[tuple[float, float, int, str]] = field(default_factory=list)

    def csv(self) -> str:
        header = ["transit_cost"] + [f"{e:g}" for e in self.grid.truck_externality]
        rows = [[f"{c:g}"] + [float(v) for v in self.shares[i]] for i, c in enumerate(self.grid.transit_cost)]
        return to_csv(header, rows)


def rejection_share(solution: Solution, instance: Instance) -> float:
    total = sum(r.demand for r in instance.freight_requests)
    if total <= 0:
        return 0.0
    rejected = set(solution.rejected)
    return sum(r.demand for r in instance.freight_requests if r.id in rejected) / total


def sweep_instance(instance: Instance, grid: SweepGrid, truck: float, transit: float) -> Instance:
    """The instance with penalty and transit cost taken from one grid cell."""
    costs = derive_costs(grid.economics_for(truck, transit))
    return instance.replace_costs(penalty_per_unit=costs.penalty_per_unit, transit_cost=costs.transit_cost)


def sensitivity_sweep(
    template: Instance | GeneratorConfig | str,
    grid: SweepGrid,
    algorithm: str = "bnp",
    config: SolveConfig | None = None,
    on_solution: Callable[[PreparedGraph, Solution], None] | None = None,
) -> SweepResult:
    """Rejected-demand share for every grid cell, averaged over seeds.

    A generator template yields one demand realization per seed; a fixed
    instance is solved once per cell. Failed cells are reported as NaN.
    ``on_solution`` sees every solved cell, e.g. to audit it.
    """
    cfg = config or SolveConfig(epsilon=1e-9)
    if isinstance(template, Instance):
        instances = [template]
    else:
        gen = preset(template) if isinstance(template, str) else template
        instances = [generate_instance(gen, s) for s in grid.seeds]
    shares = np.full((len(grid.transit_cost), len(grid.truck_externality)), math.nan)
    failures = []
    for i, c in enumerate(grid.transit_cost):
        for j, e in enumerate(grid.truck_externality):
            vals = []
            for k, inst in enumerate(instances):
                try:
                    cell = sweep_instance(inst, grid, e, c)
                    pg = build_graph(cell)
                    sol = solve(pg, algorithm, cfg)
                    if on_solution is not None:
                        on_solution(pg, sol)
                    vals.append(rejection_share(sol, cell))
                except Exception as exc:  # one bad cell must not stop the sweep
                    log.warning("sweep cell c_T=%g truck=%g seed #%d failed: %s", c, e, k, exc)
                    failures.append((c, e, k, str(exc)))
            if len(vals) == len(instances):
                shares[i, j] = float(np.mean(vals))
    return SweepResult(grid, shares, failures)


def monotonicity_violations(shares: np.ndarray, tol: float = 0.0) -> list[tuple[str, int, int, float]]:
    """Cells where the share rises along a row or falls down a column by more than ``tol``."""
    out = []
    rows, cols = shares.shape
    for i in range(rows):
        for j in range(1, cols):
            d = shares[i, j] - shares[i, j - 1]
            if d > tol:
                out.append(("row", i, j, float(d)))
    for j in range(cols):
        for i in range(1, rows):
            d = shares[i - 1, j] - shares[i, j]
            if d > tol:
                out.append(("column", i, j, float(d)))
    return out


SCENARIOS = {
    "optimistic": {"truck_externality": 0.4, "transit_cost": 0.1},
    "pessimistic": {"truck_externality": 0.2, "transit_cost": 0.2},
}


def scenario(instance: Instance, name: str, economics: dict | None = None) -> Instance:
    if name not in SCENARIOS:
        raise ReportError(f"unknown scenario {name!r}; available: {', '.join(sorted(SCENARIOS))}")
    s = SCENARIOS[name]
    grid = SweepGrid((s["truck_externality"],), (s["transit_cost"],), economics=dict(economics or {}))
    return sweep_instance(instance, grid, s["truck_externality"], s["transit_cost"])

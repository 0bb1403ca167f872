"""Domain types and the JSON instance format."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Mapping

import jsonschema

PASSENGER = "passenger"
FREIGHT = "freight"


class InstanceError(ValueError):
    """Raised when an instance file or object violates the schema or an invariant."""

    def __init__(self, message: str, record: str | None = None, field: str | None = None):
        self.record = record
        self.field = field
        where = []
        if record is not None:
            where.append(f"record {record!r}")
        if field is not None:
            where.append(f"field {field!r}")
        super().__init__(f"{message} ({', '.join(where)})" if where else message)


@dataclass(frozen=True)
class Stop:
    id: str
    x: float
    y: float


@dataclass(frozen=True)
class Request:
    """A passenger or freight request with its service time window.

    Coordinates are planar meters, times are integer seconds and the demand is
    measured in passenger equivalents. ``penalty`` and ``zeta`` override the
    instance-wide rejection cost and access/egress time threshold.
    """

    id: str
    kind: str
    origin: tuple[float, float]
    destination: tuple[float, float]
    demand: float
    earliest: int
    latest: int
    penalty: float | None = None
    zeta: int | None = None

    def __post_init__(self):
        if self.kind not in (PASSENGER, FREIGHT):
            raise InstanceError(f"unknown request kind {self.kind!r}", self.id, "kind")
        if not self.demand > 0:
            raise InstanceError("demand must be positive", self.id, "demand")
        if not self.earliest < self.latest:
            raise InstanceError("earliest start must precede latest completion", self.id, "earliest")
        if self.penalty is not None and not self.penalty > 0:
            raise InstanceError("penalty must be positive", self.id, "penalty")
        if self.zeta is not None and self.zeta < 0:
            raise InstanceError("zeta must be nonnegative", self.id, "zeta")

    @property
    def is_freight(self) -> bool:
        return self.kind == FREIGHT


@dataclass(frozen=True)
class VehicleRoute:
    """Timetabled stop sequence of one transit vehicle.

    ``units`` is the number of units (wagons) of the vehicle and
    ``unit_capacity`` the capacity of one unit in passenger equivalents.
    """

    id: str
    stops: tuple[tuple[str, int], ...]
    units: int
    unit_capacity: float

    def __post_init__(self):
        if len(self.stops) < 2:
            raise InstanceError("a route needs at least two stops", self.id, "stops")
        times = [t for _, t in self.stops]
        if any(b <= a for a, b in zip(times, times[1:])):
            raise InstanceError("arrival times must strictly increase", self.id, "stops")
        if self.units < 1:
            raise InstanceError("units must be at least 1", self.id, "units")
        if not self.unit_capacity > 0:
            raise InstanceError("unit capacity must be positive", self.id, "unit_capacity")

    @property
    def capacity(self) -> float:
        return self.units * self.unit_capacity


@dataclass(frozen=True)
class PTNetwork:
    stops: tuple[Stop, ...]
    terminals: frozenset[str]
    routes: tuple[VehicleRoute, ...]
    distances: Mapping[tuple[str, str], float] = field(default_factory=dict)

    def __post_init__(self):
        ids = [s.id for s in self.stops]
        if len(set(ids)) != len(ids):
            raise InstanceError("duplicate stop id", field="stops")
        known = set(ids)
        for t in self.terminals:
            if t not in known:
                raise InstanceError("terminal is not a stop", t, "terminals")
        route_ids = [r.id for r in self.routes]
        if len(set(route_ids)) != len(route_ids):
            raise InstanceError("duplicate route id", field="routes")
        for route in self.routes:
            for s, _ in route.stops:
                if s not in known:
                    raise InstanceError(f"route references unknown stop {s!r}", route.id, "stops")
            n_ft = sum(1 for s, _ in route.stops if s in self.terminals)
            if n_ft == 1:
                raise InstanceError(
                    "route visits exactly one freight terminal; zero or at least two are required",
                    route.id,
                    "stops",
                )
        for (a, b), d in self.distances.items():
            if a not in known or b not in known:
                raise InstanceError("distance references unknown stop", f"{a}-{b}", "distances")
            if a == b or not d > 0:
                raise InstanceError("distances must be positive between distinct stops", f"{a}-{b}", "distances")
            if (b, a) in self.distances and self.distances[(b, a)] != d:
                raise InstanceError("distance table is not symmetric", f"{a}-{b}", "distances")

    @property
    def stop_index(self) -> dict[str, Stop]:
        return {s.id: s for s in self.stops}

    def distance_km(self, a: str, b: str) -> float:
        """Distance between two stops in km; table entry if present, else Euclidean."""
        if a == b:
            return 0.0
        d = self.distances.get((a, b))
        if d is None:
            d = self.distances.get((b, a))
        if d is not None:
            return d
        idx = self.stop_index
        return math.dist((idx[a].x, idx[a].y), (idx[b].x, idx[b].y)) / 1000.0


@dataclass(frozen=True)
class CostModel:
    """Cost parameters; all money values are unitless.

    ``penalty_per_unit`` is the rejection penalty per passenger equivalent, so
    a request with demand q is rejected at cost ``penalty_per_unit * q``
    unless it carries its own penalty.
    """

    design_cost: float
    penalty_per_unit: float
    routing_rate: float = 0.0406
    transit_cost: float = 0.1
    egress_cost: float = 0.8418
    access_cost: float = 0.0
    design_cost_by_vehicle: Mapping[str, float] = field(default_factory=dict)

    def __post_init__(self):
        for name in ("design_cost", "penalty_per_unit", "routing_rate"):
            if not getattr(self, name) > 0:
                raise InstanceError(f"{name} must be positive", field=name)
        for name in ("transit_cost", "egress_cost", "access_cost"):
            if getattr(self, name) < 0:
                raise InstanceError(f"{name} must be nonnegative", field=name)
        for h, c in self.design_cost_by_vehicle.items():
            if not c > 0:
                raise InstanceError("design cost must be positive", h, "design_cost_by_vehicle")

    def vehicle_design_cost(self, vehicle: str) -> float:
        return self.design_cost_by_vehicle.get(vehicle, self.design_cost)

    def penalty(self, request: Request) -> float:
        if request.penalty is not None:
            return request.penalty
        return self.penalty_per_unit * request.demand


@dataclass(frozen=True)
class Params:
    """Service level and preprocessing parameters.

    ``zeta_default`` fixes the access/egress time threshold for all freight
    requests; when it is None the threshold is the travel time from the
    request endpoint to the terminal at ``freight_speed`` (m/s), rounded up.
    """

    chi: float = 1.0
    k: int = 3
    iota: int = 1
    zeta_default: int | None = None
    walk_speed: float = 1.0
    freight_speed: float = 5.0
    max_walk: float = 1000.0

    def __post_init__(self):
        if not 0.0 <= self.chi <= 1.0:
            raise InstanceError("chi must lie in [0, 1]", field="chi")
        if self.k < 1:
            raise InstanceError("k must be at least 1", field="k")
        if self.iota < 1:
            raise InstanceError("iota must be at least 1", field="iota")
        if self.zeta_default is not None and self.zeta_default < 0:
            raise InstanceError("zeta_default must be nonnegative", field="zeta_default")
        if not (self.walk_speed > 0 and self.freight_speed > 0):
            raise InstanceError("speeds must be positive", field="walk_speed")
        if self.max_walk < 0:
            raise InstanceError("max_walk must be nonnegative", field="max_walk")


@dataclass(frozen=True)
class Instance:
    network: PTNetwork
    requests: tuple[Request, ...]
    costs: CostModel
    params: Params = field(default_factory=Params)

    def __post_init__(self):
        ids = [r.id for r in self.requests]
        if len(set(ids)) != len(ids):
            raise InstanceError("duplicate request id", field="requests")

    @property
    def freight_requests(self) -> tuple[Request, ...]:
        return tuple(r for r in self.requests if r.is_freight)

    @property
    def passenger_requests(self) -> tuple[Request, ...]:
        return tuple(r for r in self.requests if not r.is_freight)

    def request(self, rid: str) -> Request:
        for r in self.requests:
            if r.id == rid:
                return r
        raise KeyError(rid)

    def zeta(self, request: Request, distance_m: float) -> int:
        """Access/egress time threshold for ``request`` at a terminal ``distance_m`` away."""
        if request.zeta is not None:
            return request.zeta
        if self.params.zeta_default is not None:
            return self.params.zeta_default
        return math.ceil(distance_m / self.params.freight_speed)

    def replace_costs(self, **changes) -> "Instance":
        return replace(self, costs=replace(self.costs, **changes))


_POINT = {"type": "array", "items": {"type": "number"}, "minItems": 2, "maxItems": 2}

INSTANCE_SCHEMA = {
    "type": "object",
    "required": ["network", "requests", "costs"],
    "properties": {
        "network": {
            "type": "object",
            "required": ["stops", "terminals", "routes"],
            "properties": {
                "stops": {
                    "type": "array",
                    "items": {
                        "type": "object",
                        "required": ["id", "x", "y"],
                        "properties": {"id": {"type": "string"}, "x": {"type": "number"}, "y": {"type": "number"}},
                    },
                },
                "terminals": {"type": "array", "items": {"type": "string"}},
                "routes": {
                    "type": "array",
                    "items": {
                        "type": "object",
                        "required": ["id", "units", "unit_capacity", "stops"],
                        "properties": {
                            "id": {"type": "string"},
                            "units": {"type": "integer"},
                            "unit_capacity": {"type": "number"},
                            "stops": {
                                "type": "array",
                                "items": {
                                    "type": "array",
                                    "prefixItems": [{"type": "string"}, {"type": "integer"}],
                                    "minItems": 2,
                                    "maxItems": 2,
                                },
                            },
                        },
                    },
                },
                "distances": {
                    "type": "array",
                    "items": {
                        "type": "object",
                        "required": ["from", "to", "km"],
                        "properties": {"from": {"type": "string"}, "to": {"type": "string"}, "km": {"type": "number"}},
                    },
                },
            },
        },
        "requests": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["id", "kind", "origin", "destination", "demand", "earliest", "latest"],
                "properties": {
                    "id": {"type": "string"},
                    "kind": {"enum": [PASSENGER, FREIGHT]},
                    "origin": _POINT,
                    "destination": _POINT,
                    "demand": {"type": "number"},
                    "earliest": {"type": "integer"},
                    "latest": {"type": "integer"},
                    "penalty": {"type": ["number", "null"]},
                    "zeta": {"type": ["integer", "null"]},
                },
            },
        },
        "costs": {
            "type": "object",
            "required": ["design_cost", "penalty_per_unit"],
            "properties": {
                "design_cost": {"type": "number"},
                "penalty_per_unit": {"type": "number"},
                "routing_rate": {"type": "number"},
                "transit_cost": {"type": "number"},
                "egress_cost": {"type": "number"},
                "access_cost": {"type": "number"},
                "design_cost_by_vehicle": {"type": "object", "additionalProperties": {"type": "number"}},
            },
        },
        "params": {
            "type": "object",
            "properties": {
                "chi": {"type": "number"},
                "k": {"type": "integer"},
                "iota": {"type": "integer"},
                "zeta_default": {"type": ["integer", "null"]},
                "walk_speed": {"type": "number"},
                "freight_speed": {"type": "number"},
                "max_walk": {"type": "number"},
            },
        },
    },
}


def _schema_error(doc: dict, err: jsonschema.ValidationError) -> InstanceError:
    path = list(err.absolute_path)
    record = None
    node = doc
    # walk down to the innermost object carrying an "id"
    for key in path:
        try:
            node = node[key]
        except (KeyError, IndexError, TypeError):
            break
        if isinstance(node, dict) and "id" in node:
            record = str(node["id"])
    field_name = ".".join(str(p) for p in path) or "<root>"
    return InstanceError(f"schema violation: {err.message}", record, field_name)


def instance_from_dict(doc: dict) -> Instance:
    validator = jsonschema.Draft202012Validator(INSTANCE_SCHEMA)
    errors = sorted(validator.iter_errors(doc), key=lambda e: list(map(str, e.absolute_path)))
    if errors:
        raise _schema_error(doc, errors[0])
    net = doc["network"]
    network = PTNetwork(
        stops=tuple(Stop(s["id"], float(s["x"]), float(s["y"])) for s in net["stops"]),
        terminals=frozenset(net["terminals"]),
        routes=tuple(
            VehicleRoute(
                id=r["id"],
                stops=tuple((s, int(t)) for s, t in r["stops"]),
                units=int(r["units"]),
                unit_capacity=float(r["unit_capacity"]),
            )
            for r in net["routes"]
        ),
        distances={(d["from"], d["to"]): float(d["km"]) for d in net.get("distances", [])},
    )
    requests = tuple(
        Request(
            id=r["id"],
            kind=r["kind"],
            origin=(float(r["origin"][0]), float(r["origin"][1])),
            destination=(float(r["destination"][0]), float(r["destination"][1])),
            demand=float(r["demand"]),
            earliest=int(r["earliest"]),
            latest=int(r["latest"]),
            penalty=None if r.get("penalty") is None else float(r["penalty"]),
            zeta=r.get("zeta"),
        )
        for r in doc["requests"]
    )
    c = doc["costs"]
    costs = CostModel(
        design_cost=float(c["design_cost"]),
        penalty_per_unit=float(c["penalty_per_unit"]),
        routing_rate=float(c.get("routing_rate", 0.0406)),
        transit_cost=float(c.get("transit_cost", 0.1)),
        egress_cost=float(c.get("egress_cost", 0.8418)),
        access_cost=float(c.get("access_cost", 0.0)),
        design_cost_by_vehicle={k: float(v) for k, v in c.get("design_cost_by_vehicle", {}).items()},
    )
    params = Params(**doc.get("params", {}))
    return Instance(network=network, requests=requests, costs=costs, params=params)


def instance_to_dict(instance: Instance) -> dict:
    net = instance.network
    c = instance.costs
    p = instance.params
    doc = {
        "network": {
            "stops": [{"id": s.id, "x": s.x, "y": s.y} for s in net.stops],
            "terminals": sorted(net.terminals),
            "routes": [
                {"id": r.id, "units": r.units, "unit_capacity": r.unit_capacity, "stops": [[s, t] for s, t in r.stops]}
                for r in net.routes
            ],
        },
        "requests": [],
        "costs": {
            "design_cost": c.design_cost,
            "penalty_per_unit": c.penalty_per_unit,
            "routing_rate": c.routing_rate,
            "transit_cost": c.transit_cost,
            "egress_cost": c.egress_cost,
            "access_cost": c.access_cost,
        },
        "params": {
            "chi": p.chi,
            "k": p.k,
            "iota": p.iota,
            "zeta_default": p.zeta_default,
            "walk_speed": p.walk_speed,
            "freight_speed": p.freight_speed,
            "max_walk": p.max_walk,
        },
    }
    if net.distances:
        doc["network"]["distances"] = [{"from": a, "to": b, "km": d} for (a, b), d in net.distances.items()]
    if c.design_cost_by_vehicle:
        doc["costs"]["design_cost_by_vehicle"] = dict(c.design_cost_by_vehicle)
    for r in instance.requests:
        rec = {
            "id": r.id,
            "kind": r.kind,
            "origin": list(r.origin),
            "destination": list(r.destination),
            "demand": r.demand,
            "earliest": r.earliest,
            "latest": r.latest,
        }
        if r.penalty is not None:
            rec["penalty"] = r.penalty
        if r.zeta is not None:
            rec["zeta"] = r.zeta
        doc["requests"].append(rec)
    return doc


def load_instance(path: str | Path) -> Instance:
    path = Path(path)
    with path.open() as fh:
        doc = json.load(fh)
    return instance_from_dict(doc)


def dumps_instance(instance: Instance) -> str:
    return json.dumps(instance_to_dict(instance), indent=1, sort_keys=True) + "\n"


def save_instance(instance: Instance, path: str | Path) -> None:
    Path(path).write_text(dumps_instance(instance))

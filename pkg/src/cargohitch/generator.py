"""Seeded synthetic instances: random stop layouts, straight-ish lines and demand."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, fields, replace

import numpy as np

from .costs import EconomicParameters, derive_costs
from .model import FREIGHT, PASSENGER, CostModel, Instance, Params, PTNetwork, Request, Stop, VehicleRoute


class GenerationError(ValueError):
    pass


@dataclass(frozen=True)
class GeneratorConfig:
    name: str = "custom"
    n_stops: int = 8
    n_vehicles: int = 3
    stops_per_route: tuple[int, int] = (3, 5)
    area: float = 3000.0
    horizon: int = 3600
    hop_time: tuple[int, int] = (120, 300)
    n_terminals: int = 4
    n_freight: int = 4
    n_passengers: int = 3
    freight_demand: tuple[float, float] = (0.3, 1.0)
    freight_volume: float | None = None
    passenger_demand: tuple[float, float] = (0.2, 1.0)
    units: tuple[int, int] = (2, 3)
    unit_capacity: tuple[float, float] = (1.0, 2.0)
    depot_radius: float = 2000.0
    # (x, y, weight) destination hotspots; empty means every stop weighted uniformly at random
    hotspots: tuple[tuple[float, float, float], ...] = ()
    hotspot_spread: float = 150.0
    design_cost: tuple[float, float] = (1.0, 4.0)
    penalty_per_unit: tuple[float, float] = (3.0, 6.0)
    routing_rate: float = 0.5
    transit_cost: float = 0.1
    egress_cost: float = 0.3
    economics: dict | None = None
    chi: float = 1.0
    k: int = 3
    iota: int = 1
    zeta_default: int | None = None

    def __post_init__(self):
        if self.n_stops < 2 or self.n_vehicles < 0:
            raise GenerationError("need at least two stops and a nonnegative vehicle count")
        lo, hi = self.stops_per_route
        if not 2 <= lo <= hi <= self.n_stops:
            raise GenerationError("stops_per_route must satisfy 2 <= lo <= hi <= n_stops")
        if self.n_freight > 0 and self.n_terminals < 2:
            raise GenerationError("freight requests need at least two freight terminals")
        if self.n_terminals > self.n_stops:
            raise GenerationError("more terminals than stops")
        if min(self.freight_demand + self.passenger_demand) <= 0:
            raise GenerationError("demands must be positive")

    @classmethod
    def from_dict(cls, doc: dict) -> "GeneratorConfig":
        names = {f.name for f in fields(cls)}
        unknown = set(doc) - names - {"preset"}
        if unknown:
            raise GenerationError(f"unknown generator keys: {', '.join(sorted(unknown))}")
        base = preset(doc["preset"]) if "preset" in doc else cls()
        changes = {}
        for k, v in doc.items():
            if k == "preset":
                continue
            if isinstance(getattr(base, k), tuple) and isinstance(v, list):
                v = tuple(tuple(x) if isinstance(x, list) else x for x in v)
            changes[k] = v
        return replace(base, **changes)

    def to_dict(self) -> dict:
        return asdict(self)


PRESETS: dict[str, GeneratorConfig] = {
    "tiny-oracle": GeneratorConfig(
        name="tiny-oracle",
        area=2500.0,
        stops_per_route=(4, 7),
        n_terminals=5,
        n_freight=6,
        n_passengers=4,
        depot_radius=800.0,
    ),
    "partial-pricing": GeneratorConfig(
        name="partial-pricing",
        n_stops=20,
        n_vehicles=16,
        stops_per_route=(5, 9),
        area=5000.0,
        horizon=7200,
        n_terminals=14,
        n_freight=60,
        n_passengers=12,
        units=(1, 3),
        unit_capacity=(1.0, 2.0),
        depot_radius=2000.0,
        design_cost=(10.0, 30.0),
        penalty_per_unit=(10.0, 20.0),
        routing_rate=0.3,
    ),
    "sweep": GeneratorConfig(
        name="sweep",
        n_stops=14,
        n_vehicles=6,
        stops_per_route=(4, 7),
        area=3500.0,
        horizon=5400,
        n_terminals=10,
        n_freight=20,
        n_passengers=6,
        freight_demand=(0.5, 1.5),
        units=(2, 4),
        unit_capacity=(2.0, 3.0),
        depot_radius=1200.0,
        design_cost=(1.5, 1.5),
        economics={},
    ),
}


def preset(name: str) -> GeneratorConfig:
    if name not in PRESETS:
        raise GenerationError(f"unknown preset {name!r}; available: {', '.join(sorted(PRESETS))}")
    return PRESETS[name]


def _routes(cfg: GeneratorConfig, stops: list[Stop], rng: np.random.Generator) -> list[VehicleRoute]:
    pts = np.array([(s.x, s.y) for s in stops])
    routes = []
    for v in range(cfg.n_vehicles):
        n = int(rng.integers(cfg.stops_per_route[0], cfg.stops_per_route[1] + 1))
        # a line: stops nearest to a random chord, ordered along it
        theta = rng.uniform(0, math.pi)
        d = np.array([math.cos(theta), math.sin(theta)])
        normal = np.array([-d[1], d[0]])
        center = pts[rng.integers(len(pts))]
        off = np.abs((pts - center) @ normal)
        chosen = np.argsort(off, kind="stable")[:n]
        order = chosen[np.argsort((pts[chosen] - center) @ d, kind="stable")]
        if rng.random() < 0.5:
            order = order[::-1]
        t = int(rng.integers(0, max(1, cfg.horizon // 3)))
        seq = []
        for i in order:
            seq.append((stops[i].id, t))
            t += int(rng.integers(cfg.hop_time[0], cfg.hop_time[1] + 1))
        units = int(rng.integers(cfg.units[0], cfg.units[1] + 1))
        cap = float(np.round(rng.uniform(*cfg.unit_capacity), 3))
        routes.append(VehicleRoute(f"v{v + 1}", tuple(seq), units, cap))
    return routes


def _terminals(cfg: GeneratorConfig, stops: list[Stop], routes: list[VehicleRoute], rng: np.random.Generator) -> set[str]:
    ids = [s.id for s in stops]
    terms = set(rng.choice(ids, size=cfg.n_terminals, replace=False).tolist()) if cfg.n_terminals else set()
    changed = True
    while changed:
        changed = False
        for r in routes:
            on = [s for s, _ in r.stops if s in terms]
            if len(on) == 1:
                extra = next(s for s, _ in r.stops if s not in terms)
                terms.add(extra)
                changed = True
    return terms


def _costs(cfg: GeneratorConfig, routes: list[VehicleRoute], rng: np.random.Generator) -> CostModel:
    by_vehicle = {r.id: float(np.round(rng.uniform(*cfg.design_cost), 4)) for r in routes}
    if cfg.economics is not None:
        econ = EconomicParameters(**cfg.economics)
        base = derive_costs(econ)
        return replace(base, design_cost=float(np.mean(list(by_vehicle.values())) if by_vehicle else base.design_cost),
                       design_cost_by_vehicle=by_vehicle)
    return CostModel(
        design_cost=float(np.mean(list(by_vehicle.values()))) if by_vehicle else 1.0,
        penalty_per_unit=float(np.round(rng.uniform(*cfg.penalty_per_unit), 4)),
        routing_rate=cfg.routing_rate,
        transit_cost=cfg.transit_cost,
        egress_cost=cfg.egress_cost,
        design_cost_by_vehicle=by_vehicle,
    )


def _jitter(rng, x, y, spread):
    return (float(np.round(x + rng.normal(0, spread), 1)), float(np.round(y + rng.normal(0, spread), 1)))


def generate_instance(config: GeneratorConfig | str, seed: int) -> Instance:
    """Deterministic synthetic instance for ``config`` (or a preset name) and ``seed``."""
    cfg = preset(config) if isinstance(config, str) else config
    rng = np.random.default_rng(seed)
    coords = np.round(rng.uniform(0, cfg.area, size=(cfg.n_stops, 2)), 1)
    stops = [Stop(f"s{i + 1}", float(x), float(y)) for i, (x, y) in enumerate(coords)]
    routes = _routes(cfg, stops, rng)
    terms = _terminals(cfg, stops, routes, rng)
    if cfg.n_freight and len(terms) < 2:
        raise GenerationError("freight requests need at least two freight terminals")
    network = PTNetwork(tuple(stops), frozenset(terms), tuple(routes))
    costs = _costs(cfg, routes, rng)
    center = (cfg.area / 2, cfg.area / 2)
    speed = 1.0

    requests: list[Request] = []
    # passengers ride an existing vehicle between two of its stops
    min_cap = min((r.capacity for r in routes), default=0.0)
    raw = [float(rng.uniform(*cfg.passenger_demand)) for _ in range(cfg.n_passengers)]
    scale = min(1.0, 0.5 * min_cap / sum(raw)) if raw and min_cap > 0 else 1.0
    idx = network.stop_index
    for i in range(cfg.n_passengers if routes else 0):
        r = routes[int(rng.integers(len(routes)))]
        a = int(rng.integers(0, len(r.stops) - 1))
        b = int(rng.integers(a + 1, len(r.stops)))
        (sa, ta), (sb, tb) = r.stops[a], r.stops[b]
        o = _jitter(rng, idx[sa].x, idx[sa].y, 60.0)
        d = _jitter(rng, idx[sb].x, idx[sb].y, 60.0)
        walk_o = math.ceil(math.dist(o, (idx[sa].x, idx[sa].y)) / speed)
        walk_d = math.ceil(math.dist(d, (idx[sb].x, idx[sb].y)) / speed)
        e = ta - walk_o - int(rng.integers(0, 300))
        l = tb + walk_d + int(rng.integers(0, 300))
        q = float(np.round(raw[i] * scale, 4)) or 0.0001
        requests.append(Request(f"p{i + 1}", PASSENGER, o, d, q, e, l))

    if cfg.hotspots:
        spots = np.array(cfg.hotspots, dtype=float)
    else:
        spots = np.column_stack([coords, rng.uniform(0.2, 1.0, size=len(coords))])
    weights = spots[:, 2] / spots[:, 2].sum()
    fd = [float(rng.uniform(*cfg.freight_demand)) for _ in range(cfg.n_freight)]
    if cfg.freight_volume is not None and fd:
        fd = [v * cfg.freight_volume / sum(fd) for v in fd]
    for i in range(cfg.n_freight):
        ang = rng.uniform(0, 2 * math.pi)
        o = (float(np.round(center[0] + cfg.depot_radius * math.cos(ang), 1)),
             float(np.round(center[1] + cfg.depot_radius * math.sin(ang), 1)))
        k = int(rng.choice(len(spots), p=weights))
        d = _jitter(rng, spots[k, 0], spots[k, 1], cfg.hotspot_spread)
        e = int(rng.integers(0, max(1, cfg.horizon // 3)))
        l = e + int(rng.integers(cfg.horizon // 2, cfg.horizon + 1))
        requests.append(Request(f"f{i + 1}", FREIGHT, o, d, float(np.round(fd[i], 4)), e, l))

    params = Params(chi=cfg.chi, k=cfg.k, iota=cfg.iota, zeta_default=cfg.zeta_default)
    return Instance(network, tuple(requests), costs, params)

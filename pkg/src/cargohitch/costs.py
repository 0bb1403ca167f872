"""Economic derivation of design, penalty, egress and routing costs."""

from __future__ import annotations

from dataclasses import dataclass, fields

from .model import CostModel


class CostDerivationError(ValueError):
    pass


@dataclass(frozen=True)
class EconomicParameters:
    """Case-study economics. Externalities are per vehicle and km."""

    investment: float = 1.51e6
    years: float = 25
    base_rate: float = 0.0362
    days_per_year: float = 365
    truck_externality: float = 0.2
    truck_tour_km: float = 80.0
    truck_capacity: float = 100.0
    bike_externality: float = 0.115
    bike_tour_km: float = 12.2
    bike_capacity: float = 20.0
    parcels_per_unit: float = 12.0
    routing_rate: float = 0.0406
    transit_cost: float = 0.1


def design_cost(p: EconomicParameters) -> float:
    """Daily present value of one HTU."""
    return p.investment / (p.years * p.days_per_year * (1.0 + p.base_rate) ** p.years)


def penalty_cost(p: EconomicParameters, demand: float = 1.0) -> float:
    """Truck externality of delivering ``demand`` passenger equivalents conventionally."""
    return p.truck_externality * p.truck_tour_km * demand * p.parcels_per_unit / p.truck_capacity


def egress_cost(p: EconomicParameters) -> float:
    """Cargo-bike last-mile externality per passenger equivalent."""
    return p.bike_externality * p.bike_tour_km * p.parcels_per_unit / p.bike_capacity


def vehicle_arc_cost(p: EconomicParameters, distance_km: float) -> float:
    return p.routing_rate * distance_km


def derive_costs(econ: EconomicParameters | None = None) -> CostModel:
    econ = econ or EconomicParameters()
    for f in fields(econ):
        value = getattr(econ, f.name)
        # free loading/unloading is a valid sweep point
        if f.name == "transit_cost":
            if value < 0:
                raise CostDerivationError(f"{f.name} must be nonnegative, got {value}")
        elif not value > 0:
            raise CostDerivationError(f"{f.name} must be positive, got {value}")
    return CostModel(
        design_cost=design_cost(econ),
        penalty_per_unit=penalty_cost(econ, 1.0),
        routing_rate=econ.routing_rate,
        transit_cost=econ.transit_cost,
        egress_cost=egress_cost(econ),
        access_cost=0.0,
    )

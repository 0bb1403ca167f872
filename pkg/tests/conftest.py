import pytest

from cargohitch.model import (
    CostModel,
    Instance,
    Params,
    PTNetwork,
    Request,
    Stop,
    VehicleRoute,
)


def small_example(freight_first: bool = False) -> Instance:
    """Two lines crossing at s2/s3, five terminals, one passenger and one parcel.

    Coordinates are in meters and the routing rate is 1 per km, so every
    vehicle arc costs 1.
    """
    stops = (
        Stop("s1", -1000.0, 0.0),
        Stop("s2", 0.0, 0.0),
        Stop("s3", 1000.0, 0.0),
        Stop("s4", 2000.0, 0.0),
        Stop("s5", 0.0, -1000.0),
        Stop("s6", 1000.0, 1000.0),
    )
    routes = (
        VehicleRoute("L1", (("s1", 2), ("s2", 3), ("s3", 4), ("s4", 6)), units=1, unit_capacity=1.0),
        VehicleRoute("L2", (("s5", 1), ("s2", 2), ("s3", 3), ("s6", 4)), units=1, unit_capacity=1.0),
    )
    net = PTNetwork(stops, frozenset({"s1", "s2", "s4", "s5", "s6"}), routes)
    kinds = ("freight", "passenger") if freight_first else ("passenger", "freight")
    windows = ((0, 5), (0, 6))
    ends = (((-1000.0, 0.0), (2000.0, 0.0)), ((0.0, -1100.0), (1100.0, 900.0)))
    if freight_first:
        ends = ends[::-1]
    requests = tuple(
        Request(str(i + 1), kinds[i], ends[i][0], ends[i][1], 1.0, *windows[i]) for i in range(2)
    )
    costs = CostModel(
        design_cost=10.0, penalty_per_unit=100.0, routing_rate=1.0, transit_cost=0.0, egress_cost=0.0
    )
    params = Params(chi=0.0, k=3, iota=1, zeta_default=0)
    return Instance(net, requests, costs, params)


@pytest.fixture
def example():
    return small_example()


VERDICTS: list[str] = []


@pytest.fixture
def verdict():
    """Record a PASS/FAIL line for an acceptance criterion, then assert it."""

    def record(number: int, ok: bool, detail: str) -> None:
        line = f"criterion {number:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
        VERDICTS.append(line)
        print(line)
        assert ok, detail

    return record


def pytest_terminal_summary(terminalreporter):
    if VERDICTS:
        terminalreporter.section("acceptance criteria")
        for line in sorted(VERDICTS, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)

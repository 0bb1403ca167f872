import collections

import pytest

from cargohitch.gtfs import (
    GTFSError,
    Trip,
    capacity_sampler,
    chain_stops,
    concatenate_trips,
    ingest_gtfs_subset,
    read_trips,
)

A = Trip("A", (("p", 0), ("q", 60), ("s", 120)))
B = Trip("B", (("s", 200), ("u", 260), ("w", 320)))


def test_back_to_back_trips_form_one_route():
    chains = concatenate_trips([B, A])
    assert [[t.id for t in c] for c in chains] == [["A", "B"]]
    assert len(chain_stops(chains[0])) == len(A.stops) + len(B.stops) - 1


def test_interleaving_arrival_splits_routes():
    C = Trip("C", (("x", 100), ("s", 150)))
    chains = concatenate_trips([A, B, C])
    ids = [[t.id for t in c] for c in chains]
    assert ["A"] in ids
    assert not any("A" in c and "B" in c for c in ids)
    assert sorted(t for c in ids for t in c) == ["A", "B", "C"]


def test_capacity_sampler_frequencies():
    dist = {870: 0.52, 910: 0.13, 936: 0.35}
    draw = capacity_sampler(dist, seed=7)
    counts = collections.Counter(draw() for _ in range(10_000))
    for cap, p in dist.items():
        assert counts[float(cap)] / 10_000 == pytest.approx(p, abs=0.02)


def _write_feed(tmp_path):
    (tmp_path / "stops.txt").write_text("stop_id,x,y\np,0,0\nq,1000,0\ns,2000,0\nu,3000,0\nw,4000,0\n")
    (tmp_path / "trips.txt").write_text("route_id,service_id,trip_id\nr,d,A\nr,d,B\nr,d,late\n")
    rows = ["trip_id,arrival_time,departure_time,stop_id,stop_sequence"]
    for trip in (A, B):
        for i, (s, t) in enumerate(trip.stops):
            hms = f"08:{t // 60:02d}:{t % 60:02d}"
            rows.append(f"{trip.id},{hms},{hms},{s},{i + 1}")
    rows += ["late,10:00:00,10:00:00,p,1", "late,10:05:00,10:05:00,q,2"]
    (tmp_path / "stop_times.txt").write_text("\n".join(rows) + "\n")


def test_ingest_subset(tmp_path):
    _write_feed(tmp_path)
    stops, trips = read_trips(tmp_path, (8 * 3600, 9 * 3600))
    assert [t.id for t in trips] == ["A", "B"]
    net = ingest_gtfs_subset(tmp_path, (8 * 3600, 9 * 3600), terminals={"p", "w"}, sampler=lambda: 870.0)
    assert len(net.routes) == 1
    route = net.routes[0]
    assert [s for s, _ in route.stops] == ["p", "q", "s", "u", "w"]
    assert route.units == 6
    assert route.capacity == pytest.approx(870.0)


def test_missing_table(tmp_path):
    with pytest.raises(GTFSError):
        read_trips(tmp_path, (0, 10))

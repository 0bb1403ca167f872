"""Ingestion of a GTFS subset (stops, trips, stop_times) into vehicle routes."""

from __future__ import annotations

import csv
import math
from collections import defaultdict
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np

from .model import PTNetwork, Stop, VehicleRoute

# total vehicle capacity by vehicle type and its share of the fleet
DEFAULT_CAPACITIES = {870.0: 0.52, 912.0: 0.13, 936.0: 0.35}
EARTH_RADIUS_M = 6_371_000.0


class GTFSError(ValueError):
    pass


@dataclass(frozen=True)
class Trip:
    id: str
    stops: tuple[tuple[str, int], ...]

    @property
    def first(self) -> tuple[str, int]:
        return self.stops[0]

    @property
    def last(self) -> tuple[str, int]:
        return self.stops[-1]


def _read_table(directory: Path, name: str) -> list[dict[str, str]]:
    path = directory / f"{name}.txt"
    if not path.exists():
        alt = directory / f"{name}.csv"
        if not alt.exists():
            raise GTFSError(f"missing table {name}.txt in {directory}")
        path = alt
    with path.open(newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            raise GTFSError(f"table {path.name} has no header row")
        return [{k.strip(): (v or "").strip() for k, v in row.items()} for row in reader]


def _parse_time(value: str) -> int:
    if ":" in value:
        h, m, s = (int(p) for p in value.split(":"))
        return 3600 * h + 60 * m + s
    return int(float(value))


def _project(rows: list[dict[str, str]]) -> list[Stop]:
    if rows and "x" in rows[0] and "y" in rows[0]:
        return [Stop(r["stop_id"], float(r["x"]), float(r["y"])) for r in rows]
    lats = [float(r["stop_lat"]) for r in rows]
    lons = [float(r["stop_lon"]) for r in rows]
    lat0 = math.radians(sum(lats) / len(lats)) if lats else 0.0
    lon0 = sum(lons) / len(lons) if lons else 0.0
    lat_c = sum(lats) / len(lats) if lats else 0.0
    stops = []
    for r, lat, lon in zip(rows, lats, lons):
        x = EARTH_RADIUS_M * math.radians(lon - lon0) * math.cos(lat0)
        y = EARTH_RADIUS_M * math.radians(lat - lat_c)
        stops.append(Stop(r["stop_id"], x, y))
    return stops


def read_trips(directory: str | Path, window: tuple[int, int]) -> tuple[list[Stop], list[Trip]]:
    """Read stops and the trips lying entirely inside ``window``."""
    directory = Path(directory)
    t_start, t_end = window
    if not t_start < t_end:
        raise GTFSError("time window must be nonempty")
    stop_rows = _read_table(directory, "stops")
    trip_rows = _read_table(directory, "trips")
    time_rows = _read_table(directory, "stop_times")
    stops = _project(stop_rows)
    known_stops = {s.id for s in stops}
    known_trips = {r["trip_id"] for r in trip_rows}

    events: dict[str, list[tuple[int, str, int]]] = defaultdict(list)
    for row in time_rows:
        trip_id, stop_id = row["trip_id"], row["stop_id"]
        if trip_id not in known_trips:
            raise GTFSError(f"stop_times references unknown trip {trip_id!r}")
        if stop_id not in known_stops:
            raise GTFSError(f"stop_times references unknown stop {stop_id!r} (trip {trip_id!r})")
        events[trip_id].append((int(row["stop_sequence"]), stop_id, _parse_time(row["arrival_time"])))

    trips = []
    for trip_id in sorted(events):
        seq = [(s, t) for _, s, t in sorted(events[trip_id])]
        if len(seq) < 2:
            continue
        if seq[0][1] < t_start or seq[-1][1] > t_end:
            continue
        trips.append(Trip(trip_id, tuple(seq)))
    return stops, trips


def concatenate_trips(trips: Sequence[Trip]) -> list[list[Trip]]:
    """Chain trips performed by the same vehicle.

    Trip A is followed by trip B when A ends at the stop where B starts and no
    other trip starts or ends at that stop strictly between A's end and B's
    start. Every trip ends up in exactly one chain.
    """
    # per stop: (time, kind, trip id); ends sort before starts at equal times
    at_stop: dict[str, list[tuple[int, int, str]]] = defaultdict(list)
    for trip in trips:
        s, t = trip.first
        at_stop[s].append((t, 1, trip.id))
        s, t = trip.last
        at_stop[s].append((t, 0, trip.id))

    successor: dict[str, str] = {}
    has_predecessor: set[str] = set()
    for s in sorted(at_stop):
        evs = sorted(at_stop[s])
        for i, (t, kind, trip_id) in enumerate(evs):
            if kind != 0 or i + 1 >= len(evs):
                continue
            t_next, kind_next, next_id = evs[i + 1]
            # only the immediately following event at this stop may be B
            if kind_next != 1 or next_id == trip_id or next_id in has_predecessor:
                continue
            successor[trip_id] = next_id
            has_predecessor.add(next_id)

    by_id = {t.id: t for t in trips}
    chains = []
    for trip in sorted(trips, key=lambda tr: (tr.first[1], tr.id)):
        if trip.id in has_predecessor:
            continue
        chain = [trip]
        seen = {trip.id}
        while chain[-1].id in successor:
            nxt = successor[chain[-1].id]
            if nxt in seen:
                break
            chain.append(by_id[nxt])
            seen.add(nxt)
        chains.append(chain)
    return chains


def chain_stops(chain: Iterable[Trip]) -> tuple[tuple[str, int], ...]:
    stops: list[tuple[str, int]] = []
    for trip in chain:
        seq = list(trip.stops)
        if stops and stops[-1][0] == seq[0][0]:
            seq = seq[1:]
        stops.extend(seq)
    return tuple(stops)


def capacity_sampler(
    distribution: Mapping[float, float] = DEFAULT_CAPACITIES, seed: int = 0
) -> Callable[[], float]:
    """Return a function drawing vehicle capacities from ``distribution``."""
    values = np.array(sorted(distribution), dtype=float)
    probs = np.array([distribution[v] for v in sorted(distribution)], dtype=float)
    probs = probs / probs.sum()
    rng = np.random.default_rng(seed)
    return lambda: float(rng.choice(values, p=probs))


def ingest_gtfs_subset(
    directory: str | Path,
    window: tuple[int, int],
    terminals: Iterable[str] = (),
    sampler: Callable[[], float] | None = None,
    units: int = 6,
) -> PTNetwork:
    """Build a network whose routes are maximal concatenations of trips.

    Each vehicle's total capacity is drawn from ``sampler`` and split evenly
    over its ``units``.
    """
    stops, trips = read_trips(directory, window)
    sampler = sampler or capacity_sampler()
    routes = []
    for i, chain in enumerate(concatenate_trips(trips)):
        capacity = sampler()
        routes.append(
            VehicleRoute(
                id=f"v{i + 1}",
                stops=chain_stops(chain),
                units=units,
                unit_capacity=capacity / units,
            )
        )
    return PTNetwork(stops=tuple(stops), terminals=frozenset(terminals), routes=tuple(routes))

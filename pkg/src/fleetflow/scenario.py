"""Problem data: clusters, per-epoch demand, travel times, economics, fleet state.

A Scenario is immutable after construction and safe to share across workers.
Scenarios are built either from a JSON config document (`load_scenario`) or by
ingesting raw trip records (`ingest_trips`) and attaching economic parameters.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

EARTH_RADIUS_KM = 6371.0088

#: ingestion defaults: mean network speed and the floor applied to every
#: travel-time entry so intra-cluster trips keep a positive duration
DEFAULT_SPEED_KMH = 20.0
DEFAULT_MIN_TRAVEL_MIN = 3.0

_ECON_FIELDS = (
    "value_of_time",
    "price_rate",
    "moving_cost",
    "idle_cost",
    "alt_wait",
    "alpha",
    "epoch_length",
)


class ScenarioError(ValueError):
    """Invalid scenario data; the message names the offending config path."""


@dataclass(frozen=True)
class EconomicParams:
    """Operator economics. All rates are per minute except the per-epoch idle cost.

    value_of_time: traveller value of time (currency/min).
    price_rate: fare charged per minute of in-vehicle travel.
    moving_cost: vehicle operating cost per minute of driving.
    idle_cost: parking cost per vehicle per epoch.
    alt_wait: fixed wait time of the competing service (min).
    alpha: wait-curve coefficient (min per traveller).
    epoch_length: reallocation period tau (min).
    """

    value_of_time: float
    price_rate: float
    moving_cost: float
    idle_cost: float
    alt_wait: float
    alpha: float
    epoch_length: float

    def __post_init__(self):
        for name in _ECON_FIELDS:
            value = getattr(self, name)
            if not (isinstance(value, (int, float)) and math.isfinite(value) and value > 0):
                raise ScenarioError(f"economics.{name} must be strictly positive")
        if not self.price_rate > self.moving_cost:
            raise ScenarioError("economics.price_rate must exceed economics.moving_cost")
        if not self.alpha < self.alt_wait:
            raise ScenarioError("economics.alpha must be below economics.alt_wait")


def _as_matrix_pair(raw, name: str, clusters: int) -> np.ndarray:
    arr = np.asarray(raw, dtype=float)
    if arr.shape != (2, clusters, clusters):
        raise ScenarioError(
            f"{name} must have shape (2, {clusters}, {clusters}), got {arr.shape}"
        )
    if not np.all(np.isfinite(arr)):
        raise ScenarioError(f"{name} contains non-finite entries")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class Scenario:
    """Everything a solve or a simulation needs, validated and read-only.

    demand[t][i][j] is travellers per epoch for epoch t in {0, 1} (two-period
    lookahead), travel_time[t][i][j] is minutes. alt_utility is derived from
    the single fixed-wait alternative and is not serialized.
    """

    cluster_count: int
    centroids: np.ndarray        # (J, 2) lon/lat
    demand: np.ndarray           # (2, J, J) travellers/epoch, >= 0
    travel_time: np.ndarray      # (2, J, J) minutes, > 0
    econ: EconomicParams
    rng_seed: int = 0
    alt_utility: np.ndarray = field(init=False)  # (2, J, J), derived

    def __post_init__(self):
        j = self.cluster_count
        if not (isinstance(j, int) and j >= 1):
            raise ScenarioError("cluster_count must be a positive integer")
        centroids = np.asarray(self.centroids, dtype=float)
        if centroids.shape != (j, 2):
            raise ScenarioError(f"centroids must have shape ({j}, 2), got {centroids.shape}")
        if not np.all(np.isfinite(centroids)):
            raise ScenarioError("centroids contains non-finite entries")
        centroids.setflags(write=False)
        object.__setattr__(self, "centroids", centroids)
        demand = _as_matrix_pair(self.demand, "demand", j)
        if np.any(demand < 0):
            raise ScenarioError("demand entries must be non-negative")
        object.__setattr__(self, "demand", demand)
        travel = _as_matrix_pair(self.travel_time, "travel_time", j)
        if np.any(travel <= 0):
            raise ScenarioError("travel_time entries must be strictly positive (including diagonals)")
        object.__setattr__(self, "travel_time", travel)
        if not isinstance(self.rng_seed, int):
            raise ScenarioError("rng_seed must be an integer")
        e = self.econ
        alt = -e.value_of_time * (e.alt_wait + travel) - e.price_rate * travel
        alt.setflags(write=False)
        object.__setattr__(self, "alt_utility", alt)

    def __eq__(self, other) -> bool:
        if not isinstance(other, Scenario):
            return NotImplemented
        return (
            self.cluster_count == other.cluster_count
            and self.econ == other.econ
            and self.rng_seed == other.rng_seed
            and np.array_equal(self.centroids, other.centroids)
            and np.array_equal(self.demand, other.demand)
            and np.array_equal(self.travel_time, other.travel_time)
        )

    def rotated(self) -> "Scenario":
        """Scenario with the two epochs swapped (used when epoch 2 is current)."""
        return Scenario(
            cluster_count=self.cluster_count,
            centroids=self.centroids,
            demand=self.demand[::-1].copy(),
            travel_time=self.travel_time[::-1].copy(),
            econ=self.econ,
            rng_seed=self.rng_seed,
        )


@dataclass(frozen=True)
class FleetState:
    """Available vehicles per cluster at the start of the current period."""

    supply: tuple[int, ...]

    def __post_init__(self):
        if any((not isinstance(s, int)) or s < 0 for s in self.supply):
            raise ScenarioError("supply entries must be non-negative integers")
        if sum(self.supply) <= 0:
            raise ScenarioError("supply must contain at least one vehicle")

    @property
    def total(self) -> int:
        return sum(self.supply)


@dataclass(frozen=True)
class TripRecord:
    """One observed trip: request time plus pickup/dropoff coordinates."""

    pickup_min: float
    pickup_lon: float
    pickup_lat: float
    dropoff_lon: float
    dropoff_lat: float

    def __post_init__(self):
        values = (self.pickup_min, self.pickup_lon, self.pickup_lat,
                  self.dropoff_lon, self.dropoff_lat)
        if not all(math.isfinite(v) for v in values):
            raise ScenarioError("trip record contains non-finite values")
        if self.pickup_min < 0:
            raise ScenarioError("trip record pickup_min must be >= 0")


# ---------------------------------------------------------------------------
# config (de)serialization
# ---------------------------------------------------------------------------

def load_scenario(config_text: str) -> Scenario:
    """Parse and validate a scenario JSON document.

    Raises ScenarioError naming the missing or invalid key.
    """
    try:
        doc = json.loads(config_text)
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"config is not valid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise ScenarioError("config root must be an object")

    def need(mapping, key, path):
        if key not in mapping:
            raise ScenarioError(f"missing config key: {path}")
        return mapping[key]

    clusters = need(doc, "cluster_count", "cluster_count")
    econ_doc = need(doc, "economics", "economics")
    if not isinstance(econ_doc, dict):
        raise ScenarioError("economics must be an object")
    for name in _ECON_FIELDS:
        need(econ_doc, name, f"economics.{name}")
    unknown = set(econ_doc) - set(_ECON_FIELDS)
    if unknown:
        raise ScenarioError(f"unknown economics keys: {sorted(unknown)}")
    econ = EconomicParams(**{name: float(econ_doc[name]) for name in _ECON_FIELDS})

    if not isinstance(clusters, int):
        raise ScenarioError("cluster_count must be an integer")
    return Scenario(
        cluster_count=clusters,
        centroids=np.asarray(need(doc, "centroids", "centroids"), dtype=float),
        demand=np.asarray(need(doc, "demand", "demand"), dtype=float),
        travel_time=np.asarray(need(doc, "travel_time", "travel_time"), dtype=float),
        econ=econ,
        rng_seed=int(need(doc, "rng_seed", "rng_seed")),
    )


def serialize_scenario(scenario: Scenario) -> str:
    """JSON document that round-trips exactly through load_scenario."""
    doc = {
        "cluster_count": scenario.cluster_count,
        "centroids": scenario.centroids.tolist(),
        "demand": scenario.demand.tolist(),
        "travel_time": scenario.travel_time.tolist(),
        "economics": {name: getattr(scenario.econ, name) for name in _ECON_FIELDS},
        "rng_seed": scenario.rng_seed,
    }
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"


# ---------------------------------------------------------------------------
# trip ingestion
# ---------------------------------------------------------------------------

TRIP_HEADER = ("pickup_min", "pickup_lon", "pickup_lat", "dropoff_lon", "dropoff_lat")


def read_trips(text: str) -> list[TripRecord]:
    """Parse the comma-separated trip format (header required)."""
    reader = csv.reader(io.StringIO(text))
    try:
        header = tuple(next(reader))
    except StopIteration:
        raise ScenarioError("trip file is empty") from None
    if header != TRIP_HEADER:
        raise ScenarioError(f"trip file header must be {','.join(TRIP_HEADER)}")
    records = []
    for lineno, row in enumerate(reader, start=2):
        if not row:
            continue
        if len(row) != 5:
            raise ScenarioError(f"trip file line {lineno}: expected 5 fields")
        try:
            records.append(TripRecord(*(float(v) for v in row)))
        except ValueError as exc:
            raise ScenarioError(f"trip file line {lineno}: {exc}") from exc
    return records


def haversine_km(lon1, lat1, lon2, lat2):
    """Great-circle distance in km; accepts scalars or broadcastable arrays."""
    lon1, lat1, lon2, lat2 = (np.radians(np.asarray(v, dtype=float)) for v in (lon1, lat1, lon2, lat2))
    dlon = lon2 - lon1
    dlat = lat2 - lat1
    a = np.sin(dlat / 2.0) ** 2 + np.cos(lat1) * np.cos(lat2) * np.sin(dlon / 2.0) ** 2
    return 2.0 * EARTH_RADIUS_KM * np.arcsin(np.sqrt(a))


def _kmeans(points: np.ndarray, k: int, rng: np.random.Generator, max_iter: int = 100):
    """Seeded k-means with k-means++ initialisation and a fixed iteration cap."""
    distinct = np.unique(points, axis=0)
    if len(distinct) < k:
        raise ScenarioError(
            f"k-means requires at least {k} distinct pickup points, got {len(distinct)}"
        )
    # k-means++ seeding
    centroids = np.empty((k, 2), dtype=float)
    centroids[0] = points[rng.integers(len(points))]
    d2 = np.sum((points - centroids[0]) ** 2, axis=1)
    for c in range(1, k):
        total = d2.sum()
        if total <= 0:
            # remaining mass is on already-chosen centroids; pick any unused point
            centroids[c] = distinct[c % len(distinct)]
        else:
            idx = rng.choice(len(points), p=d2 / total)
            centroids[c] = points[idx]
        d2 = np.minimum(d2, np.sum((points - centroids[c]) ** 2, axis=1))

    assign = np.zeros(len(points), dtype=int)
    for _ in range(max_iter):
        dists = np.sum((points[:, None, :] - centroids[None, :, :]) ** 2, axis=2)
        new_assign = np.argmin(dists, axis=1)
        for c in range(k):
            members = points[new_assign == c]
            if len(members):
                centroids[c] = members.mean(axis=0)
            else:
                # re-seed an empty cluster at the point farthest from its centroid
                far = np.argmax(np.min(dists, axis=1))
                centroids[c] = points[far]
                new_assign[far] = c
        if np.array_equal(new_assign, assign):
            assign = new_assign
            break
        assign = new_assign
    return centroids, assign


@dataclass(frozen=True)
class IngestedDemand:
    """Clusters and per-epoch matrices extracted from raw trip records."""

    centroids: np.ndarray      # (k, 2) lon/lat
    demand: np.ndarray         # (2, k, k) trip counts per epoch window
    travel_time: np.ndarray    # (2, k, k) minutes


def ingest_trips(
    records: Sequence[TripRecord],
    k: int,
    tau: float,
    epoch_start: float,
    *,
    speed_kmh: float = DEFAULT_SPEED_KMH,
    min_travel_min: float = DEFAULT_MIN_TRAVEL_MIN,
    speed_factors: tuple[float, float] = (1.0, 1.0),
    seed: int = 0,
) -> IngestedDemand:
    """Cluster pickups with seeded k-means and count trips into two epoch windows.

    Epoch t covers [epoch_start + (t-1)*tau, epoch_start + t*tau). Travel times
    are centroid haversine distances at speed_kmh, divided by the per-epoch
    speed factor and floored at min_travel_min. Empty windows yield zero rows.
    """
    if k < 2:
        raise ScenarioError("ingestion requires k >= 2 clusters")
    if not records:
        raise ScenarioError("ingestion requires at least one trip record")
    if tau <= 0:
        raise ScenarioError("ingestion requires tau > 0")

    rng = np.random.default_rng(seed)
    pickups = np.array([(r.pickup_lon, r.pickup_lat) for r in records], dtype=float)
    dropoffs = np.array([(r.dropoff_lon, r.dropoff_lat) for r in records], dtype=float)
    times = np.array([r.pickup_min for r in records], dtype=float)

    centroids, pickup_cluster = _kmeans(pickups, k, rng)
    drop_d2 = np.sum((dropoffs[:, None, :] - centroids[None, :, :]) ** 2, axis=2)
    dropoff_cluster = np.argmin(drop_d2, axis=1)

    demand = np.zeros((2, k, k), dtype=float)
    for t in range(2):
        lo = epoch_start + t * tau
        in_window = (times >= lo) & (times < lo + tau)
        np.add.at(demand[t], (pickup_cluster[in_window], dropoff_cluster[in_window]), 1.0)

    lon = centroids[:, 0]
    lat = centroids[:, 1]
    dist = haversine_km(lon[:, None], lat[:, None], lon[None, :], lat[None, :])
    base_minutes = dist / speed_kmh * 60.0
    travel = np.stack([
        np.maximum(base_minutes / speed_factors[t], min_travel_min) for t in range(2)
    ])
    return IngestedDemand(centroids=centroids, demand=demand, travel_time=travel)


def scenario_from_ingest(fragment: IngestedDemand, econ: EconomicParams, seed: int = 0) -> Scenario:
    """Attach economics to an ingested demand fragment."""
    return Scenario(
        cluster_count=len(fragment.centroids),
        centroids=fragment.centroids,
        demand=fragment.demand,
        travel_time=fragment.travel_time,
        econ=econ,
        rng_seed=seed,
    )


def perturb_demand(demand: np.ndarray, mean_frac: float, sd_frac: float, seed: int) -> np.ndarray:
    """Scale every demand entry by max(0, 1 + N(mean_frac, sd_frac)).

    Positive error means over-estimation. Deterministic for a fixed seed.
    """
    if mean_frac < 0 or sd_frac < 0:
        raise ScenarioError("perturbation mean_frac and sd_frac must be >= 0")
    demand = np.asarray(demand, dtype=float)
    rng = np.random.default_rng(seed)
    noise = rng.normal(mean_frac, sd_frac, size=demand.shape) if sd_frac > 0 else np.full(demand.shape, mean_frac)
    return demand * np.maximum(0.0, 1.0 + noise)

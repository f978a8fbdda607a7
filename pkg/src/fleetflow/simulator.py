"""Desk-scale discrete-event simulator for redistribution policies.

Demand is replayed as per-epoch Poisson draws of the scenario matrices
(epochs cycle through the two matrices), customers are offered the nearest
available vehicle in their origin cluster under FIFO order and accept via an
individual logit choice against the fixed-wait alternative. Every epoch a
pluggable policy relocates idle vehicles. Runs are bit-deterministic for a
fixed (scenario, fleet, policy, seed).

Pickup waits quote the assigned vehicle's travel time to the origin centroid
plus one handling minute. Idle vehicles are dispersed within their cluster, so
their pickup travel is the intra-cluster mean time; relocating vehicles headed
to the origin quote their remaining leg.
"""

from __future__ import annotations

import time as _time
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from fleetflow.choice import choice_probability
from fleetflow.convex_flow import solve_allocation
from fleetflow.scenario import FleetState, Scenario

HANDLING_MIN = 1.0

POLICY_NAMES = ("none", "cmcf", "greedy_deficit")


@dataclass
class Vehicle:
    id: int
    cluster: int            # current cluster while idle, destination while busy
    kind: str = "idle"      # idle | serve | relocate
    busy_until: float = 0.0
    pickup_at: float = 0.0
    odometer: float = 0.0   # driving minutes

    def state(self, now: float) -> str:
        if self.kind == "idle":
            return "idle"
        if self.kind == "relocate":
            return "relocating"
        return "to-pickup" if now < self.pickup_at else "in-trip"


@dataclass(frozen=True)
class Request:
    id: int
    time: float
    origin: int
    destination: int
    outcome: str            # served | lost-to-alternative
    wait: float | None      # minutes, only when served
    fare: float


@dataclass(frozen=True)
class Event:
    """One event-log line: time,event,vehicle,cluster_from,cluster_to,request_id."""

    time: float
    kind: str
    vehicle: int | None = None
    cluster_from: int | None = None
    cluster_to: int | None = None
    request_id: int | None = None

    def csv_row(self) -> str:
        def cell(v):
            return "" if v is None else str(v)
        return (f"{self.time!r},{self.kind},{cell(self.vehicle)},"
                f"{cell(self.cluster_from)},{cell(self.cluster_to)},{cell(self.request_id)}")


EVENT_HEADER = "time,event,vehicle,cluster_from,cluster_to,request_id"


@dataclass(frozen=True)
class KpiReport:
    """Key performance indicators of one simulation run."""

    policy: str
    fleet_size: int
    seed: int
    horizon_epochs: int
    requests: int
    served: int
    lost: int
    avg_wait: float | None
    market_share: float
    profit: float
    mileage: float          # driving minutes (relative KPI, units cancel)
    solve_times: tuple[float, ...]


@dataclass(frozen=True)
class ComparisonRow:
    """Percentage KPI shifts of one run against a named baseline run."""

    policy: str
    fleet_size: int
    seed: int
    wait_reduction_pct: float | None
    share_improvement_pct: float | None
    profit_improvement_pct: float | None
    added_mileage_pct: float | None


@dataclass(frozen=True)
class FleetSnapshot:
    """Policy view at an epoch boundary: dispatchable vehicles and total supply.

    supply counts idle vehicles plus those becoming idle within the epoch at
    their drop-off cluster; idle_ids lists the immediately dispatchable ones.
    """

    epoch: int
    idle_ids: tuple[tuple[int, ...], ...]
    supply: tuple[int, ...]


PolicyFn = Callable[[FleetSnapshot, Scenario, int], list[tuple[int, int, int]]]


def _cap_to_idle(plan: list[tuple[int, int, int]], snapshot: FleetSnapshot) -> list[tuple[int, int, int]]:
    available = [len(ids) for ids in snapshot.idle_ids]
    capped = []
    for origin, dest, count in plan:
        take = min(count, available[origin])
        if take > 0:
            available[origin] -= take
            capped.append((origin, dest, take))
    return capped


def policy_none(snapshot: FleetSnapshot, scenario: Scenario, epoch: int) -> list[tuple[int, int, int]]:
    return []


def policy_cmcf(snapshot: FleetSnapshot, scenario: Scenario, epoch: int) -> list[tuple[int, int, int]]:
    """Relocations from the convex minimum-cost-flow allocation.

    scenario must present the commencing epoch as its first demand matrix
    (run() rotates it on odd epochs).
    """
    if sum(snapshot.supply) == 0:
        return []
    report = solve_allocation(scenario, FleetState(tuple(snapshot.supply)))
    return _cap_to_idle(report.redistribution_flows(), snapshot)


def policy_greedy_deficit(snapshot: FleetSnapshot, scenario: Scenario, epoch: int) -> list[tuple[int, int, int]]:
    """Supply-chasing baseline that ignores economics.

    Cluster targets are the commencing epoch's outbound demand (rounded up);
    vehicles move from the largest surplus to the largest deficit until either
    side exhausts.
    """
    demand = scenario.demand[0].sum(axis=1)
    supply = list(snapshot.supply)
    j = scenario.cluster_count
    deficits = {i: max(0, int(np.ceil(demand[i])) - supply[i]) for i in range(j)}
    surpluses = {i: max(0, supply[i] - int(np.ceil(demand[i]))) for i in range(j)}
    plan = []
    while True:
        dest = max(range(j), key=lambda i: (deficits[i], -i))
        src = max(range(j), key=lambda i: (surpluses[i], -i))
        if deficits[dest] <= 0 or surpluses[src] <= 0:
            break
        moved = min(deficits[dest], surpluses[src])
        deficits[dest] -= moved
        surpluses[src] -= moved
        plan.append((src, dest, moved))
    return _cap_to_idle(plan, snapshot)


POLICIES: dict[str, PolicyFn] = {
    "none": policy_none,
    "cmcf": policy_cmcf,
    "greedy_deficit": policy_greedy_deficit,
}


def _release(vehicles: list[Vehicle], now: float, events: list[Event]) -> None:
    for veh in vehicles:
        if veh.kind != "idle" and veh.busy_until <= now:
            events.append(Event(veh.busy_until,
                                "arrive" if veh.kind == "relocate" else "dropoff",
                                vehicle=veh.id, cluster_to=veh.cluster))
            veh.kind = "idle"


def run(
    scenario: Scenario,
    horizon_epochs: int,
    fleet_size: int,
    policy: str,
    seed: int,
) -> tuple[KpiReport, list[Event]]:
    """Simulate a fleet under one redistribution policy.

    Vehicles start round-robin across clusters. Each epoch: release finished
    vehicles, let the policy relocate idle ones, charge parked vehicles the
    idle cost, then replay Poisson requests in time order. Rejected customers
    are lost to the alternative and never re-quoted.
    """
    if policy not in POLICIES:
        raise ValueError(f"unknown policy {policy!r}; expected one of {POLICY_NAMES}")
    if horizon_epochs < 1:
        raise ValueError("horizon must span at least one epoch")
    policy_fn = POLICIES[policy]
    j = scenario.cluster_count
    tau = scenario.econ.epoch_length
    econ = scenario.econ
    rng = np.random.default_rng(seed)

    vehicles = [Vehicle(id=v, cluster=v % j) for v in range(fleet_size)]
    events: list[Event] = []
    waits: list[float] = []
    fares = 0.0
    idle_epochs = 0
    served = 0
    lost = 0
    request_count = 0
    solve_times: list[float] = []

    for epoch in range(horizon_epochs):
        t0 = epoch * tau
        epoch_scenario = scenario if epoch % 2 == 0 else scenario.rotated()
        r_cur = epoch_scenario.travel_time[0]
        z_cur = epoch_scenario.demand[0]

        _release(vehicles, t0, events)

        idle_ids: list[list[int]] = [[] for _ in range(j)]
        supply = [0] * j
        for veh in vehicles:
            if veh.kind == "idle":
                idle_ids[veh.cluster].append(veh.id)
                supply[veh.cluster] += 1
            elif veh.busy_until <= t0 + tau:
                supply[veh.cluster] += 1
        snapshot = FleetSnapshot(
            epoch=epoch,
            idle_ids=tuple(tuple(ids) for ids in idle_ids),
            supply=tuple(supply),
        )
        started = _time.perf_counter()
        plan = policy_fn(snapshot, epoch_scenario, epoch)
        solve_times.append(_time.perf_counter() - started)

        for origin, dest, count in plan:
            for vid in snapshot.idle_ids[origin][:count]:
                veh = vehicles[vid]
                leg = float(r_cur[origin, dest])
                veh.kind = "relocate"
                veh.cluster = dest
                veh.busy_until = t0 + leg
                veh.odometer += leg
                events.append(Event(t0, "relocate", vehicle=vid,
                                    cluster_from=origin, cluster_to=dest))

        for veh in vehicles:
            if veh.kind == "idle":
                idle_epochs += 1
                events.append(Event(t0, "idle_epoch", vehicle=veh.id,
                                    cluster_from=veh.cluster, cluster_to=veh.cluster))

        # Poisson demand with uniform arrival instants inside the epoch
        arrivals: list[tuple[float, int, int]] = []
        counts = rng.poisson(z_cur)
        for o in range(j):
            for d in range(j):
                for _ in range(int(counts[o, d])):
                    arrivals.append((t0 + rng.uniform(0.0, tau), o, d))
        arrivals.sort()

        for when, origin, dest in arrivals:
            rid = request_count
            request_count += 1
            events.append(Event(when, "request", cluster_from=origin,
                                cluster_to=dest, request_id=rid))
            _release(vehicles, when, events)

            best: Vehicle | None = None
            best_quote = float("inf")
            for veh in vehicles:
                if veh.kind == "idle" and veh.cluster == origin:
                    quote = float(r_cur[origin, origin]) + HANDLING_MIN
                elif veh.kind == "relocate" and veh.cluster == origin:
                    quote = (veh.busy_until - when) + HANDLING_MIN
                else:
                    continue
                if quote < best_quote:
                    best, best_quote = veh, quote
            if best is None:
                lost += 1
                events.append(Event(when, "unserved", cluster_from=origin,
                                    cluster_to=dest, request_id=rid))
                continue

            r_trip = float(r_cur[origin, dest])
            offer = -econ.value_of_time * (best_quote + r_trip) - econ.price_rate * r_trip
            rival = -econ.value_of_time * (econ.alt_wait + r_trip) - econ.price_rate * r_trip
            accept_prob = choice_probability(offer, [rival])
            if rng.random() >= accept_prob:
                lost += 1
                events.append(Event(when, "reject", vehicle=best.id,
                                    cluster_from=origin, cluster_to=dest, request_id=rid))
                continue

            served += 1
            waits.append(best_quote)
            fares += econ.price_rate * r_trip
            enroute = best.kind == "relocate"
            # an en-route vehicle finishes its already-counted leg as the pickup
            best.odometer += r_trip if enroute else float(r_cur[origin, origin]) + r_trip
            best.kind = "serve"
            best.cluster = dest
            best.pickup_at = when + best_quote
            best.busy_until = when + best_quote + r_trip
            events.append(Event(when, "serve_enroute" if enroute else "serve",
                                vehicle=best.id, cluster_from=origin,
                                cluster_to=dest, request_id=rid))

    _release(vehicles, float("inf"), events)

    mileage = float(sum(veh.odometer for veh in vehicles))
    profit = fares - econ.moving_cost * mileage - econ.idle_cost * idle_epochs
    report = KpiReport(
        policy=policy,
        fleet_size=fleet_size,
        seed=seed,
        horizon_epochs=horizon_epochs,
        requests=request_count,
        served=served,
        lost=lost,
        avg_wait=(sum(waits) / len(waits)) if waits else None,
        market_share=(served / request_count) if request_count else 0.0,
        profit=profit,
        mileage=mileage,
        solve_times=tuple(solve_times),
    )
    events.sort(key=lambda ev: ev.time)
    return report, events


def _pct(value: float, base: float, flip: bool = False) -> float | None:
    if base == 0:
        return None
    shift = (value - base) / abs(base) * 100.0
    return -shift if flip else shift


def compare(reports: Sequence[KpiReport], baseline: str) -> list[ComparisonRow]:
    """Percentage KPI shifts of each run against the named baseline policy.

    All reports must come from the same seed and fleet size. Positive
    wait_reduction means shorter waits than the baseline.
    """
    base = next((r for r in reports if r.policy == baseline), None)
    if base is None:
        raise ValueError(f"baseline policy {baseline!r} missing from reports")
    if len({(r.seed, r.fleet_size) for r in reports}) != 1:
        raise ValueError("compared runs must share seed and fleet size")
    rows = []
    for rep in reports:
        if rep.avg_wait is None or base.avg_wait is None:
            wait_red = None
        else:
            wait_red = _pct(rep.avg_wait, base.avg_wait, flip=True)
        rows.append(ComparisonRow(
            policy=rep.policy,
            fleet_size=rep.fleet_size,
            seed=rep.seed,
            wait_reduction_pct=wait_red,
            share_improvement_pct=_pct(rep.market_share, base.market_share),
            profit_improvement_pct=_pct(rep.profit, base.profit),
            added_mileage_pct=_pct(rep.mileage, base.mileage),
        ))
    return rows

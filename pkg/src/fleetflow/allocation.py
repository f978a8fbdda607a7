"""Two-period vehicle allocation network.

The graph is a layered DAG. Per cluster: an initial-state source A feeds the
decision vertices K (serve trips), L (relocate empty) and M (idle). Trip
vertices form a chain K_i -> K_i|a -> K_i|a,b ... whose extra members model
relocated vehicles arriving mid-epoch and joining the local supply; each chain
vertex is exposed to a share phi of the epoch's uniform demand. Trip edges land
on resulting-state vertices C, which feed next-period availability D and a
single sink. D -> sink edges carry the expected value of next-period trips.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Sequence

import numpy as np

from fleetflow.scenario import FleetState, Scenario, ScenarioError


class Layer(str, Enum):
    INITIAL = "A"
    TRIP = "K"
    RELOCATE = "L"
    IDLE = "M"
    RESULT = "C"
    FUTURE = "D"
    SINK = "t"


class EdgeClass(str, Enum):
    TRIP = "trip"                    # K chain vertex -> C, non-linear revenue cost
    FUTURE = "future"                # D -> sink, non-linear next-period cost
    REDISTRIBUTION = "redistribution"  # L -> foreign mixing vertex, linear moving cost
    IDLE = "idle"                    # M -> C and chain overflow -> C, linear idle cost
    ZERO = "zero"                    # structural edges, free


@dataclass(frozen=True)
class VertexId:
    """(layer, cluster, mixing sequence); mixing is non-empty only for chain extensions."""

    layer: Layer
    cluster: int | None = None
    mixing: tuple[int, ...] = ()

    def __str__(self) -> str:
        if self.layer is Layer.SINK:
            return "t"
        base = f"{self.layer.value}{self.cluster}"
        if self.mixing:
            base += "|" + "|".join(str(c) for c in self.mixing)
        return base


SINK = VertexId(Layer.SINK)


@dataclass(frozen=True)
class EdgeRecord:
    """Directed edge with class, structural bounds and cost metadata.

    upper is None for uncapacitated edges; convexification caps non-linear
    edges via their cost profiles instead of mutating the graph. phi is set
    only on trip edges. od is (origin, destination) for cost evaluation;
    future edges carry (origin, None).
    """

    tail: VertexId
    head: VertexId
    klass: EdgeClass
    lower: int = 0
    upper: int | None = None
    phi: float | None = None
    od: tuple[int, int | None] | None = None


@dataclass(frozen=True)
class ArrivalSchedule:
    """Sorted mid-epoch arrivals into one cluster and the induced demand shares.

    order[m] is the source cluster of the m-th arrival; times are clipped to
    tau. phi has one entry per chain vertex (native first) and sums to 1.
    """

    cluster: int
    order: tuple[int, ...]
    times: tuple[float, ...]
    phi: tuple[float, ...]


def arrival_schedule(cluster: int, travel_time_first_epoch: np.ndarray, tau: float) -> ArrivalSchedule:
    """Demand shares for one cluster's trip chain.

    Arrivals from foreign clusters j land at min(r[j][cluster], tau), sorted
    ascending with ties broken by cluster index. The epoch's uniform demand is
    cut at those instants: the native segment spans [0, t1), the m-th mixing
    segment [t_m, t_{m+1}).
    """
    r = np.asarray(travel_time_first_epoch, dtype=float)
    j = r.shape[0]
    arrivals = sorted(
        (min(float(r[other, cluster]), float(tau)), other)
        for other in range(j) if other != cluster
    )
    order = tuple(other for _, other in arrivals)
    times = tuple(t for t, _ in arrivals)
    cuts = [0.0, *times, float(tau)]
    phi = tuple((cuts[s + 1] - cuts[s]) / float(tau) for s in range(len(cuts) - 1))
    return ArrivalSchedule(cluster=cluster, order=order, times=times, phi=phi)


@dataclass(frozen=True, eq=False)
class AllocationGraph:
    """Immutable allocation network for one scenario and fleet state.

    vertices is a topological order; balance[v] > 0 only on the A layer and
    balances sum to zero. chains[i] lists cluster i's trip-chain vertex
    indices, native first.
    """

    scenario: Scenario
    fleet: FleetState
    vertices: tuple[VertexId, ...]
    edges: tuple[EdgeRecord, ...]
    balance: tuple[int, ...]
    chains: tuple[tuple[int, ...], ...]
    schedules: tuple[ArrivalSchedule, ...]
    vertex_index: dict[VertexId, int] = field(repr=False)

    @property
    def cluster_count(self) -> int:
        return self.scenario.cluster_count

    def out_edges(self) -> list[list[int]]:
        adj: list[list[int]] = [[] for _ in self.vertices]
        for e, edge in enumerate(self.edges):
            adj[self.vertex_index[edge.tail]].append(e)
        return adj

    def in_edges(self) -> list[list[int]]:
        adj: list[list[int]] = [[] for _ in self.vertices]
        for e, edge in enumerate(self.edges):
            adj[self.vertex_index[edge.head]].append(e)
        return adj

    def edges_of_class(self, klass: EdgeClass) -> list[int]:
        return [e for e, edge in enumerate(self.edges) if edge.klass is klass]

    def dump_edges(self, caps: Sequence[int | None] | None = None) -> str:
        """Debug edge list `from,to,class,l,u,phi`; u is inf when uncapacitated."""
        out = io.StringIO()
        out.write("from,to,class,l,u,phi\n")
        for e, edge in enumerate(self.edges):
            upper = edge.upper
            if caps is not None and caps[e] is not None:
                upper = caps[e]
            u_txt = "inf" if upper is None else str(upper)
            phi_txt = "" if edge.phi is None else repr(edge.phi)
            out.write(f"{edge.tail},{edge.head},{edge.klass.value},{edge.lower},{u_txt},{phi_txt}\n")
        return out.getvalue()


def build_graph(scenario: Scenario, fleet: FleetState) -> AllocationGraph:
    """Assemble the transformed single-sink allocation network."""
    j = scenario.cluster_count
    if len(fleet.supply) != j:
        raise ScenarioError(
            f"fleet supply has {len(fleet.supply)} entries for {j} clusters"
        )

    schedules = tuple(
        arrival_schedule(i, scenario.travel_time[0], scenario.econ.epoch_length)
        for i in range(j)
    )

    vertices: list[VertexId] = []
    vertices += [VertexId(Layer.INITIAL, i) for i in range(j)]
    vertices += [VertexId(Layer.RELOCATE, i) for i in range(j)]
    vertices += [VertexId(Layer.IDLE, i) for i in range(j)]
    chains: list[tuple[int, ...]] = []
    for i in range(j):
        chain = [len(vertices)]
        vertices.append(VertexId(Layer.TRIP, i))
        for m in range(len(schedules[i].order)):
            chain.append(len(vertices))
            vertices.append(VertexId(Layer.TRIP, i, schedules[i].order[: m + 1]))
        chains.append(tuple(chain))
    vertices += [VertexId(Layer.RESULT, i) for i in range(j)]
    vertices += [VertexId(Layer.FUTURE, i) for i in range(j)]
    vertices.append(SINK)
    index = {v: k for k, v in enumerate(vertices)}

    def vertex(layer: Layer, cluster: int, mixing: tuple[int, ...] = ()) -> VertexId:
        return vertices[index[VertexId(layer, cluster, mixing)]]

    edges: list[EdgeRecord] = []
    for i in range(j):
        a = vertex(Layer.INITIAL, i)
        edges.append(EdgeRecord(a, vertices[chains[i][0]], EdgeClass.ZERO))
        edges.append(EdgeRecord(a, vertex(Layer.RELOCATE, i), EdgeClass.ZERO))
        edges.append(EdgeRecord(a, vertex(Layer.IDLE, i), EdgeClass.ZERO))
    for i in range(j):
        for prev, nxt in zip(chains[i], chains[i][1:]):
            edges.append(EdgeRecord(vertices[prev], vertices[nxt], EdgeClass.ZERO))
    for i in range(j):
        for pos, v in enumerate(chains[i]):
            phi = schedules[i].phi[pos]
            for m in range(j):
                edges.append(EdgeRecord(
                    vertices[v], vertex(Layer.RESULT, m), EdgeClass.TRIP,
                    phi=phi, od=(i, m),
                ))
    for i in range(j):
        for dest in range(j):
            if dest == i:
                continue
            # mixing vertex in `dest` whose latest arrival is cluster i
            pos = schedules[dest].order.index(i)
            target = vertices[chains[dest][pos + 1]]
            edges.append(EdgeRecord(
                vertex(Layer.RELOCATE, i), target, EdgeClass.REDISTRIBUTION, od=(i, dest),
            ))
    for i in range(j):
        edges.append(EdgeRecord(vertex(Layer.IDLE, i), vertex(Layer.RESULT, i), EdgeClass.IDLE))
    for i in range(j):
        # overflow exit: vehicles that reach the end of the trip chain without a
        # trip assignment idle at the local resulting state
        edges.append(EdgeRecord(vertices[chains[i][-1]], vertex(Layer.RESULT, i), EdgeClass.IDLE))
    for i in range(j):
        edges.append(EdgeRecord(vertex(Layer.RESULT, i), vertex(Layer.FUTURE, i), EdgeClass.ZERO))
        edges.append(EdgeRecord(vertex(Layer.RESULT, i), SINK, EdgeClass.ZERO))
    for i in range(j):
        edges.append(EdgeRecord(vertex(Layer.FUTURE, i), SINK, EdgeClass.FUTURE, od=(i, None)))

    balance = [0] * len(vertices)
    for i in range(j):
        balance[index[VertexId(Layer.INITIAL, i)]] = fleet.supply[i]
    balance[index[SINK]] = -fleet.total

    return AllocationGraph(
        scenario=scenario,
        fleet=fleet,
        vertices=tuple(vertices),
        edges=tuple(edges),
        balance=tuple(balance),
        chains=tuple(chains),
        schedules=schedules,
        vertex_index=index,
    )


def transformed_counts(cluster_count: int) -> tuple[int, int]:
    """Closed-form vertex/edge counts of the transformed network."""
    j = cluster_count
    return j * j + 5 * j + 1, j ** 3 + 2 * j * j + 6 * j


def build_plain_skeleton(cluster_count: int) -> tuple[list[str], list[tuple[str, str]]]:
    """Untransformed multi-sink skeleton (no mixing chain, no D layer, no sink).

    Kept for structural checks: per cluster A feeds K/L/M, K reaches every C,
    L reaches foreign C, M its own C.
    """
    j = cluster_count
    names = [f"{layer}{i}" for layer in ("A", "K", "L", "M", "C") for i in range(j)]
    edges: list[tuple[str, str]] = []
    for i in range(j):
        edges += [(f"A{i}", f"K{i}"), (f"A{i}", f"L{i}"), (f"A{i}", f"M{i}")]
        edges += [(f"K{i}", f"C{m}") for m in range(j)]
        edges += [(f"L{i}", f"C{m}") for m in range(j) if m != i]
        edges.append((f"M{i}", f"C{i}"))
    return names, edges


def validate_flow(
    graph: AllocationGraph,
    flows: Sequence[int],
    caps: Sequence[int | None] | None = None,
) -> list[str]:
    """Check bounds and conservation; returns human-readable violations (empty = ok).

    Balance convention: outflow minus inflow equals the vertex balance.
    """
    if len(flows) != len(graph.edges):
        raise ValueError("flow must assign a value to every edge")
    violations = []
    for e, edge in enumerate(graph.edges):
        x = flows[e]
        upper = edge.upper if caps is None or caps[e] is None else caps[e]
        if x < edge.lower:
            violations.append(f"edge {edge.tail}->{edge.head}: flow {x} below lower bound {edge.lower}")
        if upper is not None and x > upper:
            violations.append(f"edge {edge.tail}->{edge.head}: flow {x} above capacity {upper}")
    net = list(graph.balance)
    for e, edge in enumerate(graph.edges):
        net[graph.vertex_index[edge.tail]] -= flows[e]
        net[graph.vertex_index[edge.head]] += flows[e]
    for v, residual in enumerate(net):
        if residual != 0:
            violations.append(f"vertex {graph.vertices[v]}: conservation violated by {residual}")
    return violations

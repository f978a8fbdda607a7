"""Edge-splitting solver for the convex minimum-cost flow allocation problem.

Every open non-linear edge starts as two parallel linear arcs: the tangent
piece on [0, x_prime] and the secant of the convex curve on [x_prime, x_star].
After each network-simplex solve, the first unsaturated convex-domain segment
of each edge (with all earlier segments full and capacity above one) is
bisected and re-priced by secants of the original convex cost, until no such
segment remains. Slopes are non-decreasing left to right, so parallel arcs
fill contiguously and the final linearized optimum is exact.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from fleetflow.allocation import AllocationGraph, EdgeClass, build_graph
from fleetflow.edge_costs import EdgeCostProfile, build_profiles
from fleetflow.network_simplex import (
    FlowSolution,
    LinearFlowNetwork,
    SolverFault,
    solve,
)
from fleetflow.scenario import FleetState, Scenario

_SLOPE_TOL = 1e-9


@dataclass(frozen=True)
class Segment:
    """One parallel linear arc covering [lo, hi] of an edge's cumulative flow."""

    lo: int
    hi: int
    slope: float
    is_tangent: bool

    @property
    def capacity(self) -> int:
        return self.hi - self.lo


@dataclass
class LinearizedGraph:
    """Allocation graph plus the current parallel-segment decomposition.

    segments holds the ordered decomposition for open non-linear edges;
    closed non-linear edges (x_star == 0) become zero-capacity arcs and
    linear edges pass through unchanged.
    """

    graph: AllocationGraph
    profiles: list[EdgeCostProfile]
    segments: dict[int, list[Segment]] = field(default_factory=dict)


def _secant(profile: EdgeCostProfile, lo: int, hi: int) -> float:
    return (profile.convex_cost(hi) - profile.convex_cost(lo)) / (hi - lo)


def initial_linearization(graph: AllocationGraph, profiles: list[EdgeCostProfile]) -> LinearizedGraph:
    """Two parallel arcs per open non-linear edge; zero-width pieces omitted."""
    gl = LinearizedGraph(graph=graph, profiles=profiles)
    for e, profile in enumerate(profiles):
        if not profile.nonlinear or profile.x_star == 0:
            continue
        x_prime, x_star = profile.x_prime, profile.x_star
        segs: list[Segment] = []
        if x_prime > 0:
            segs.append(Segment(0, x_prime, profile.tangent_slope, True))
        if x_star > x_prime:
            segs.append(Segment(x_prime, x_star, _secant(profile, x_prime, x_star), False))
        gl.segments[e] = segs
    return gl


def _build_network(gl: LinearizedGraph) -> LinearFlowNetwork:
    graph = gl.graph
    index = graph.vertex_index
    arcs = []
    for e, (edge, profile) in enumerate(zip(graph.edges, gl.profiles)):
        tail, head = index[edge.tail], index[edge.head]
        if profile.nonlinear:
            segs = gl.segments.get(e)
            if not segs:
                arcs.append((tail, head, 0, 0.0, ("edge", e)))
                continue
            for seg in segs:
                arcs.append((tail, head, seg.capacity, seg.slope, ("seg", e, seg.lo)))
        else:
            arcs.append((tail, head, edge.upper, profile.slope, ("edge", e)))
    return LinearFlowNetwork.build(len(graph.vertices), graph.balance, arcs)


def _aggregate(gl: LinearizedGraph, solution: FlowSolution) -> tuple[np.ndarray, dict[int, dict[int, int]]]:
    """Total flow per original edge plus per-segment flows keyed by segment lo."""
    edge_flows = np.zeros(len(gl.graph.edges), dtype=np.int64)
    seg_flows: dict[int, dict[int, int]] = {e: {} for e in gl.segments}
    for key, flow in zip(solution.keys, solution.flows):
        if key[0] == "seg":
            _, e, lo = key
            edge_flows[e] += flow
            seg_flows[e][lo] = int(flow)
        else:
            edge_flows[key[1]] = flow
    return edge_flows, seg_flows


def _check_contiguity(gl: LinearizedGraph, seg_flows: dict[int, dict[int, int]]) -> None:
    """At a simplex optimum flow must fill segments left to right.

    Ties in slope may legally fill out of order, so a violation requires a
    strictly cheaper unsaturated segment to the left of a flowing one.
    """
    for e, segs in gl.segments.items():
        flows = [seg_flows[e].get(seg.lo, 0) for seg in segs]
        for k in range(len(segs)):
            if flows[k] <= 0:
                continue
            for j in range(k):
                if flows[j] < segs[j].capacity and \
                        segs[j].slope < segs[k].slope - _SLOPE_TOL * (1.0 + abs(segs[k].slope)):
                    raise SolverFault(
                        f"contiguity violated on edge {e}: segment {j} unsaturated "
                        f"below flowing segment {k}"
                    )


def _canonical_fill(segs: list[Segment], total: int) -> list[int]:
    """Left-to-right fill of an edge's aggregate flow (optimal under tied slopes)."""
    fills = []
    rest = int(total)
    for seg in segs:
        take = min(rest, seg.capacity)
        fills.append(take)
        rest -= take
    if rest:
        raise SolverFault("aggregate edge flow exceeds the segment capacities")
    return fills


def splittable_edges(edge_flows: np.ndarray, gl: LinearizedGraph) -> list[tuple[int, int]]:
    """Segments eligible for bisection as (edge index, segment position).

    Per edge: the first segment not at capacity, provided every earlier
    segment is saturated, it lies in the convex domain (not the tangent
    piece), and its capacity exceeds one.
    """
    chosen = []
    for e, segs in gl.segments.items():
        fills = _canonical_fill(segs, int(edge_flows[e]))
        for k, seg in enumerate(segs):
            if fills[k] < seg.capacity:
                if not seg.is_tangent and seg.capacity > 1:
                    chosen.append((e, k))
                break
    return chosen


def split(gl: LinearizedGraph, edge: int, position: int) -> LinearizedGraph:
    """Bisect a segment's interval at ceil((lo + hi) / 2) and re-price by secants."""
    seg = gl.segments[edge][position]
    if seg.capacity <= 1:
        raise ValueError("cannot split a unit-capacity segment")
    profile = gl.profiles[edge]
    mid = (seg.lo + seg.hi + 1) // 2
    gl.segments[edge][position:position + 1] = [
        Segment(seg.lo, mid, _secant(profile, seg.lo, mid), False),
        Segment(mid, seg.hi, _secant(profile, mid, seg.hi), False),
    ]
    return gl


@dataclass(frozen=True)
class SolveReport:
    """Outcome of an edge-splitting solve.

    objective evaluates the piecewise-convex costs at the aggregated integer
    flows; linearized_objective is the final parallel-arc optimum (the two
    agree at termination up to the per-edge constants c(0)). trace rows are
    (iteration, segments split, linearized objective, objective).
    """

    graph: AllocationGraph
    profiles: list[EdgeCostProfile]
    edge_flows: np.ndarray
    objective: float
    linearized_objective: float
    iterations: int
    segments_added: int
    delta: int
    iteration_bound: int
    trace: tuple[tuple[int, int, float, float], ...]
    solution: FlowSolution

    def flows_by_class(self) -> dict[EdgeClass, int]:
        totals = {klass: 0 for klass in EdgeClass}
        for e, edge in enumerate(self.graph.edges):
            totals[edge.klass] += int(self.edge_flows[e])
        return totals

    def redistribution_flows(self) -> list[tuple[int, int, int]]:
        """Positive relocation orders as (origin, destination, vehicles)."""
        moves = []
        for e, edge in enumerate(self.graph.edges):
            if edge.klass is EdgeClass.REDISTRIBUTION and self.edge_flows[e] > 0:
                moves.append((edge.od[0], edge.od[1], int(self.edge_flows[e])))
        return moves

    def trip_flows(self) -> dict[tuple[int, int], int]:
        """Trip vehicles aggregated over each origin's chain, keyed by od pair."""
        trips: dict[tuple[int, int], int] = {}
        for e, edge in enumerate(self.graph.edges):
            if edge.klass is EdgeClass.TRIP and self.edge_flows[e] > 0:
                od = (edge.od[0], edge.od[1])
                trips[od] = trips.get(od, 0) + int(self.edge_flows[e])
        return trips


def true_objective(gl: LinearizedGraph, edge_flows: np.ndarray) -> float:
    """Piecewise-convex objective at aggregated integer flows."""
    total = 0.0
    for e, profile in enumerate(gl.profiles):
        total += profile.convex_cost(int(edge_flows[e]))
    return total


def solve_cmcf(graph: AllocationGraph, profiles: list[EdgeCostProfile]) -> SolveReport:
    """Iterate simplex solves and segment bisections until no segment is splittable."""
    gl = initial_linearization(graph, profiles)
    delta = max((p.x_star - p.x_prime) for p in profiles if p.nonlinear and p.x_star > 0) \
        if any(p.nonlinear and p.x_star > 0 for p in profiles) else 0
    bound = (delta - 1).bit_length() + 1 if delta >= 1 else 1

    iterations = 0
    segments_added = 0
    trace: list[tuple[int, int, float, float]] = []
    while True:
        iterations += 1
        network = _build_network(gl)
        solution = solve(network)
        if solution.status != "optimal":
            raise SolverFault("allocation network became infeasible mid-solve")
        edge_flows, seg_flows = _aggregate(gl, solution)
        _check_contiguity(gl, seg_flows)
        objective = true_objective(gl, edge_flows)
        to_split = splittable_edges(edge_flows, gl)
        trace.append((iterations, len(to_split), solution.objective, objective))
        if not to_split:
            return SolveReport(
                graph=graph,
                profiles=profiles,
                edge_flows=edge_flows,
                objective=objective,
                linearized_objective=solution.objective,
                iterations=iterations,
                segments_added=segments_added,
                delta=delta,
                iteration_bound=bound,
                trace=tuple(trace),
                solution=solution,
            )
        # at most one segment per edge, so insertions cannot shift other picks
        for e, k in to_split:
            split(gl, e, k)
            segments_added += 1


def solve_allocation(scenario: Scenario, fleet: FleetState) -> SolveReport:
    """Build the allocation network and profiles for a scenario, then solve it."""
    graph = build_graph(scenario, fleet)
    profiles = build_profiles(graph)
    return solve_cmcf(graph, profiles)

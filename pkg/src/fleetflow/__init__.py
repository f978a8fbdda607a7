"""Empty-vehicle redistribution for autonomous ride-sourcing fleets.

Builds a two-period allocation network over demand clusters, convexifies its
logit-demand edge costs, solves the result exactly with an edge-splitting
convex minimum-cost-flow algorithm, and scores policies in a desk-scale
discrete-event simulator.
"""

from fleetflow.scenario import (
    EconomicParams,
    FleetState,
    Scenario,
    ScenarioError,
    TripRecord,
    ingest_trips,
    load_scenario,
    perturb_demand,
    serialize_scenario,
)
from fleetflow.allocation import AllocationGraph, build_graph
from fleetflow.edge_costs import EdgeCostProfile, build_profiles
from fleetflow.network_simplex import FlowSolution, LinearFlowNetwork, max_flow_feasibility, solve
from fleetflow.convex_flow import SolveReport, solve_allocation, solve_cmcf
from fleetflow.simulator import KpiReport, compare, run

__version__ = "0.1.0"

__all__ = [
    "AllocationGraph",
    "EconomicParams",
    "EdgeCostProfile",
    "FleetState",
    "FlowSolution",
    "KpiReport",
    "LinearFlowNetwork",
    "Scenario",
    "ScenarioError",
    "SolveReport",
    "TripRecord",
    "build_graph",
    "build_profiles",
    "compare",
    "ingest_trips",
    "load_scenario",
    "max_flow_feasibility",
    "perturb_demand",
    "run",
    "serialize_scenario",
    "solve",
    "solve_allocation",
    "solve_cmcf",
]

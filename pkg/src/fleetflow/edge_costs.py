"""Edge cost curves, their convex-domain breakpoints, and piecewise-convex form.

Non-linear trip and future-trip costs are evaluated on the integer supply grid
(flows are vehicle counts), the absolute minimizer x_star and the last
non-stationary inflection x_prime are located by finite differences, and the
concave prefix [0, x_prime] is replaced by the tangent at x_prime. The capped
upper bound of every non-linear edge is x_star.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass, replace
from typing import Callable, Sequence

import numpy as np

from fleetflow.allocation import AllocationGraph, EdgeClass
from fleetflow.choice import ChoiceInputs, alt_utility, demand_curve
from fleetflow.scenario import EconomicParams, Scenario

#: relative tolerance suppressing float sign chatter in second differences
CURVATURE_TOL = 1e-9


class BreakpointSearchError(ValueError):
    """The search window did not bracket the curve's minimum."""


class ConvexityError(AssertionError):
    """An assembled piecewise cost failed its convexity check."""


def trip_cost_h(od: tuple[int, int], phi: float, x, scenario: Scenario):
    """Trip edge cost: -phi * N1(x) * p * r + C_M * r * x."""
    i, m = od
    econ = scenario.econ
    z = float(scenario.demand[0, i, m])
    r = float(scenario.travel_time[0, i, m])
    inputs = ChoiceInputs(z, r, alt_utility(econ, r), econ)
    x = np.asarray(x, dtype=float)
    out = -phi * demand_curve(inputs, x) * econ.price_rate * r + econ.moving_cost * r * x
    return out if out.ndim else float(out)


def future_cost_f(origin: int, x, scenario: Scenario):
    """Future-trip edge cost, summed over destinations with demand split x/|J|."""
    econ = scenario.econ
    j = scenario.cluster_count
    x = np.asarray(x, dtype=float)
    out = np.zeros_like(x)
    for m in range(j):
        z = float(scenario.demand[1, origin, m])
        r = float(scenario.travel_time[1, origin, m])
        inputs = ChoiceInputs(z, r, alt_utility(econ, r), econ)
        out += -demand_curve(inputs, x / j) * econ.price_rate * r + econ.moving_cost * r * x
    return out if out.ndim else float(out)


def redistribution_cost(od: tuple[int, int], x, scenario: Scenario):
    """Empty relocation cost: r1 * C_M per vehicle."""
    i, m = od
    x = np.asarray(x, dtype=float)
    out = float(scenario.travel_time[0, i, m]) * scenario.econ.moving_cost * x
    return out if out.ndim else float(out)


def idle_cost(x, econ: EconomicParams):
    """Idle cost: C_I per vehicle per epoch."""
    x = np.asarray(x, dtype=float)
    out = econ.idle_cost * x
    return out if out.ndim else float(out)


def default_search_cap(demand: float) -> int:
    """Search window for the curve minimum; expected travellers saturate at Z."""
    return max(3 * math.ceil(demand), 50)


def half_share_supply(econ: EconomicParams, demand: float) -> float:
    """Supply at which the wait equals the alternative's and the share is 0.5."""
    return econ.alpha / econ.alt_wait * demand - 1.0


def locate_breakpoints(curve: Callable[[np.ndarray], np.ndarray], search_cap: int,
                       label: str = "") -> tuple[int, int]:
    """Integer breakpoints (x_prime, x_star) of a cost curve on [0, search_cap].

    x_star is the smallest integer argmin; x_prime is the largest integer below
    x_star where the central second difference turns from negative to
    non-negative (0 when the curve has no concave prefix). Raises
    BreakpointSearchError when the forward difference at search_cap is not
    positive, i.e. the window may not bracket the minimum.
    """
    xs = np.arange(search_cap + 2, dtype=float)
    values = np.asarray(curve(xs), dtype=float)
    if values.shape != xs.shape or not np.all(np.isfinite(values)):
        raise BreakpointSearchError(f"curve{label} is not finite on [0, {search_cap + 1}]")
    return _breakpoints_from_grid(values, search_cap, label)


def _breakpoints_from_grid(values: np.ndarray, search_cap: int, label: str = "") -> tuple[int, int]:
    if values[search_cap + 1] - values[search_cap] <= 0:
        raise BreakpointSearchError(
            f"search cap {search_cap} does not bracket the minimum of curve{label}"
        )
    x_star = int(np.argmin(values[: search_cap + 1]))
    x_prime = 0
    for x in range(x_star - 1, 0, -1):
        d2 = values[x + 1] - 2.0 * values[x] + values[x - 1]
        if d2 < -CURVATURE_TOL * max(1.0, abs(values[x])):
            x_prime = x + 1
            break
    return x_prime, x_star


@dataclass(frozen=True)
class EdgeCostProfile:
    """Cost description of one edge, convexified for non-linear kinds.

    Linear kinds carry only a slope. Non-linear kinds carry the sampled curve
    (values, on [0, search_cap + 1]), breakpoints, the tangent replacing the
    concave prefix, and the assembled convex curve on [0, x_star]. capacity is
    x_star for non-linear kinds and None (unbounded) otherwise.
    """

    kind: EdgeClass
    od: tuple[int, int | None] | None = None
    phi: float | None = None
    slope: float = 0.0
    search_cap: int | None = None
    values: np.ndarray | None = None
    x_prime: int | None = None
    x_star: int | None = None
    tangent_slope: float | None = None
    tangent_intercept: float | None = None
    convex_values: np.ndarray | None = None

    @property
    def nonlinear(self) -> bool:
        return self.kind in (EdgeClass.TRIP, EdgeClass.FUTURE)

    @property
    def capacity(self) -> int | None:
        return self.x_star if self.nonlinear else None

    def cost(self, x: float) -> float:
        """Original (pre-convexification) cost at integer flow x."""
        if not self.nonlinear:
            return self.slope * x
        x = int(x)
        if self.values is not None and x < len(self.values):
            return float(self.values[x])
        raise ValueError(f"flow {x} outside the sampled grid")

    def convex_cost(self, x: float) -> float:
        """Piecewise-convex cost at integer flow x in [0, x_star]."""
        if not self.nonlinear:
            return self.slope * x
        x = int(x)
        if self.convex_values is None or x >= len(self.convex_values):
            raise ValueError(f"flow {x} outside the convex domain [0, {self.x_star}]")
        return float(self.convex_values[x])


def _assert_convex(values: np.ndarray, what: str) -> None:
    if len(values) < 3:
        return
    d2 = values[2:] - 2.0 * values[1:-1] + values[:-2]
    tol = CURVATURE_TOL * np.maximum(1.0, np.abs(values[1:-1]))
    bad = np.nonzero(d2 < -tol)[0]
    if bad.size:
        x = int(bad[0]) + 1
        raise ConvexityError(f"{what}: negative second difference {d2[bad[0]]:.3e} at x={x}")


def convexify(profile: EdgeCostProfile) -> EdgeCostProfile:
    """Assemble the piecewise-convex cost and cap the edge at x_star.

    The prefix [0, x_prime] becomes the tangent of the curve at x_prime (slope
    from the unit forward difference, so the junction keeps non-decreasing
    slopes); the rest keeps the original curve. Verifies convexity of the
    result by second differences.
    """
    if not profile.nonlinear:
        return profile
    if profile.x_prime is None or profile.x_star is None or profile.values is None:
        raise ValueError("breakpoints must be located before convexification")
    x_prime, x_star = profile.x_prime, profile.x_star
    if x_star == 0:
        return replace(profile, tangent_slope=None, tangent_intercept=None,
                       convex_values=profile.values[:1].copy())
    slope = float(profile.values[x_prime + 1] - profile.values[x_prime])
    anchor = float(profile.values[x_prime])
    cc = profile.values[: x_star + 1].astype(float).copy()
    if x_prime > 0:
        xs = np.arange(x_prime + 1, dtype=float)
        cc[: x_prime + 1] = anchor + slope * (xs - x_prime)
    _assert_convex(cc, f"convexified cost od={profile.od}")
    return replace(
        profile,
        tangent_slope=slope,
        tangent_intercept=anchor - slope * x_prime,
        convex_values=cc,
    )


def _closed_profile(kind: EdgeClass, od, phi, linear_slope_at_one: float) -> EdgeCostProfile:
    """Never-profitable non-linear edge: single zero-capacity convex segment."""
    values = np.array([0.0, linear_slope_at_one], dtype=float)
    return EdgeCostProfile(
        kind=kind, od=od, phi=phi, search_cap=0, values=values,
        x_prime=0, x_star=0, convex_values=values[:1].copy(),
    )


def build_profiles(graph: AllocationGraph) -> list[EdgeCostProfile]:
    """Cost profile for every edge of the allocation graph, convexified."""
    scenario = graph.scenario
    econ = scenario.econ
    j = scenario.cluster_count
    profiles: list[EdgeCostProfile] = []
    for edge in graph.edges:
        if edge.klass is EdgeClass.ZERO:
            profiles.append(EdgeCostProfile(kind=EdgeClass.ZERO, slope=0.0))
        elif edge.klass is EdgeClass.IDLE:
            profiles.append(EdgeCostProfile(kind=EdgeClass.IDLE, slope=econ.idle_cost))
        elif edge.klass is EdgeClass.REDISTRIBUTION:
            i, m = edge.od
            profiles.append(EdgeCostProfile(
                kind=EdgeClass.REDISTRIBUTION, od=edge.od,
                slope=float(scenario.travel_time[0, i, m]) * econ.moving_cost,
            ))
        elif edge.klass is EdgeClass.TRIP:
            i, m = edge.od
            z = float(scenario.demand[0, i, m])
            r = float(scenario.travel_time[0, i, m])
            if edge.phi * z == 0.0:
                # no exposed demand: pure moving cost, minimized at zero flow
                profiles.append(_closed_profile(EdgeClass.TRIP, edge.od, edge.phi,
                                                econ.moving_cost * r))
                continue
            cap = default_search_cap(z)
            xs = np.arange(cap + 2, dtype=float)
            values = trip_cost_h(edge.od, edge.phi, xs, scenario)
            x_prime, x_star = _breakpoints_from_grid(values, cap, f" od={edge.od}")
            profiles.append(convexify(EdgeCostProfile(
                kind=EdgeClass.TRIP, od=edge.od, phi=edge.phi, search_cap=cap,
                values=values, x_prime=x_prime, x_star=x_star,
            )))
        elif edge.klass is EdgeClass.FUTURE:
            origin = edge.od[0]
            z_row = scenario.demand[1, origin]
            r_row = scenario.travel_time[1, origin]
            if float(z_row.sum()) == 0.0:
                profiles.append(_closed_profile(EdgeClass.FUTURE, edge.od, None,
                                                econ.moving_cost * float(r_row.sum())))
                continue
            cap = max(3 * j * math.ceil(float(z_row.max())), 50)
            xs = np.arange(cap + 2, dtype=float)
            values = future_cost_f(origin, xs, scenario)
            x_prime, x_star = _breakpoints_from_grid(values, cap, f" origin={origin}")
            profiles.append(convexify(EdgeCostProfile(
                kind=EdgeClass.FUTURE, od=edge.od, search_cap=cap,
                values=values, x_prime=x_prime, x_star=x_star,
            )))
        else:  # pragma: no cover
            raise ValueError(f"unknown edge class {edge.klass}")
    return profiles


def dump_curve(profile: EdgeCostProfile) -> str:
    """Curve dump `x,c(x),cC(x)` over the convex domain of a non-linear edge."""
    if not profile.nonlinear:
        raise ValueError("curve dumps apply to non-linear edges only")
    out = io.StringIO()
    out.write("x,c,cC\n")
    for x in range(profile.x_star + 1):
        out.write(f"{x},{profile.values[x]!r},{profile.convex_values[x]!r}\n")
    return out.getvalue()

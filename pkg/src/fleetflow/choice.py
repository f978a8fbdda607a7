"""Supply-dependent demand: wait curve, generalized cost, logit share, travellers.

All functions are pure and accept numpy arrays for the supply argument, which
lets edge-cost construction evaluate whole integer grids in one call.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from fleetflow.scenario import EconomicParams


@dataclass(frozen=True)
class ChoiceInputs:
    """One origin-destination market: demand, travel time, and the fixed-wait rival."""

    demand: float        # potential travellers per epoch
    travel_time: float   # minutes
    alt_utility: float   # utility of the single alternative option
    econ: EconomicParams


def wait_time(alpha: float, demand: float, supply):
    """Average pickup wait alpha*Z/(x+1); strictly decreasing in supply."""
    supply = np.asarray(supply, dtype=float)
    out = alpha * demand / (supply + 1.0)
    return out if out.ndim else float(out)


def generalized_cost(wait, travel_time: float, econ: EconomicParams):
    """Mean trip utility -v*(wait + travel) - price*travel (always negative)."""
    wait = np.asarray(wait, dtype=float)
    out = -econ.value_of_time * (wait + travel_time) - econ.price_rate * travel_time
    return out if out.ndim else float(out)


def choice_probability(utility, alternatives: Sequence[float]):
    """Logit share of the service against the alternative options.

    Computed with max-subtraction so shares stay strictly inside (0, 1) until
    utility gaps exceed roughly 700 (float64 exp underflow).
    """
    raw = np.asarray(utility, dtype=float)
    alts = np.asarray(alternatives, dtype=float).reshape(-1)
    if alts.size == 0:
        raise ValueError("choice_probability needs at least one alternative")
    u = np.atleast_1d(raw)
    peak = np.maximum(u, alts.max())
    own = np.exp(u - peak)
    rival = np.exp(alts[None, :] - peak[:, None]).sum(axis=1)
    q = own / (own + rival)
    return float(q[0]) if raw.ndim == 0 else q


def expected_travelers(share, demand: float):
    """Travellers choosing the service: share * demand, inside [0, demand]."""
    share = np.asarray(share, dtype=float)
    out = share * demand
    return out if out.ndim else float(out)


def alt_utility(econ: EconomicParams, travel_time: float) -> float:
    """Utility of the identically-priced alternative with fixed wait."""
    return float(-econ.value_of_time * (econ.alt_wait + travel_time) - econ.price_rate * travel_time)


def demand_curve(inputs: ChoiceInputs, supply):
    """Expected travellers as a function of vehicle supply (sigmoid in supply)."""
    w = wait_time(inputs.econ.alpha, inputs.demand, supply)
    g = generalized_cost(w, inputs.travel_time, inputs.econ)
    q = choice_probability(g, [inputs.alt_utility])
    return expected_travelers(q, inputs.demand)


def max_share(econ: EconomicParams) -> float:
    """Zero-wait limit of the logit share against the fixed-wait alternative."""
    return float(1.0 / (1.0 + np.exp(-econ.value_of_time * econ.alt_wait)))

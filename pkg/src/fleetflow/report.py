"""Figure rendering for solve and simulation outputs.

Figures are written next to the delimited tables they illustrate; nothing here
is needed by the solver or simulator.
"""

from __future__ import annotations

from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

from fleetflow.edge_costs import EdgeCostProfile
from fleetflow.simulator import ComparisonRow

_KPI_FIELDS = (
    ("wait_reduction_pct", "wait reduction"),
    ("share_improvement_pct", "market share"),
    ("profit_improvement_pct", "profit"),
    ("added_mileage_pct", "added mileage"),
)


def save_cost_curve_figure(profile: EdgeCostProfile, path: str | Path) -> Path:
    """Original vs convexified edge cost with the breakpoints marked."""
    if not profile.nonlinear:
        raise ValueError("cost-curve figures apply to non-linear edges only")
    path = Path(path)
    stop = min(len(profile.values) - 1, max(profile.x_star + 10, int(1.3 * profile.x_star) + 1, 20))
    xs = range(stop + 1)
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    ax.plot(xs, [profile.values[x] for x in xs], label="cost", color="tab:blue")
    cc_xs = range(profile.x_star + 1)
    ax.plot(cc_xs, [profile.convex_values[x] for x in cc_xs],
            label="convexified", color="tab:orange", linestyle="--")
    ax.axvline(profile.x_prime, color="grey", linewidth=0.8)
    ax.axvline(profile.x_star, color="black", linewidth=0.8)
    ax.annotate("x'", (profile.x_prime, ax.get_ylim()[1]), ha="left", va="top")
    ax.annotate("x*", (profile.x_star, ax.get_ylim()[1]), ha="left", va="top")
    ax.set_xlabel("vehicles")
    ax.set_ylabel("cost")
    ax.set_title(f"{profile.kind.value} edge od={profile.od}")
    ax.grid(True, alpha=0.3)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def save_kpi_figure(rows: Sequence[ComparisonRow], path: str | Path) -> Path:
    """Grouped bars of the four percentage KPIs per (policy, fleet, seed) run."""
    path = Path(path)
    labels = [f"{r.policy}\nfleet {r.fleet_size}, seed {r.seed}" for r in rows]
    fig, ax = plt.subplots(figsize=(max(6.0, 1.8 * len(rows)), 4.0))
    width = 0.2
    for k, (attr, title) in enumerate(_KPI_FIELDS):
        values = [getattr(r, attr) if getattr(r, attr) is not None else 0.0 for r in rows]
        offsets = [i + (k - 1.5) * width for i in range(len(rows))]
        ax.bar(offsets, values, width=width, label=title)
    ax.set_xticks(range(len(rows)))
    ax.set_xticklabels(labels, fontsize=8)
    ax.axhline(0.0, color="black", linewidth=0.8)
    ax.set_ylabel("% vs baseline")
    ax.grid(True, axis="y", alpha=0.3)
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path

"""fleetflow command line: ingest trips, solve allocations, simulate policies.

Exit codes: 0 success, 1 runtime fault, 2 validation error. All randomness
derives from explicit --seed values, so identical invocations produce byte
identical outputs.
"""

from __future__ import annotations

import argparse
import concurrent.futures
import dataclasses
import json
import os
import sys
import time
from pathlib import Path

import numpy as np

from fleetflow.allocation import EdgeClass, build_graph
from fleetflow.convex_flow import solve_cmcf
from fleetflow.edge_costs import build_profiles, dump_curve
from fleetflow.scenario import (
    EconomicParams,
    FleetState,
    Scenario,
    ScenarioError,
    ingest_trips,
    load_scenario,
    read_trips,
    scenario_from_ingest,
    serialize_scenario,
)
from fleetflow.simulator import (
    EVENT_HEADER,
    ComparisonRow,
    KpiReport,
    POLICY_NAMES,
    compare,
    run,
)

#: defaults mirror the best-performing configuration: 30-minute epochs,
#: wait coefficient 0.75
DEFAULT_ECON = dict(
    value_of_time=17.69 / 60.0,
    price_rate=1.00,
    moving_cost=12.96 / 60.0,
    idle_cost=1.0,
    alt_wait=5.0,
    alpha=0.75,
    epoch_length=30.0,
)

KPI_HEADER = ("policy,fleet,seed,horizon_epochs,requests,served,lost,avg_wait,"
              "market_share,profit,mileage,solve_time_mean,solve_time_max")
COMPARISON_HEADER = ("policy,fleet,seed,wait_reduction_pct,share_improvement_pct,"
                     "profit_improvement_pct,added_mileage_pct")


def _atomic_write(path: Path, text: str) -> None:
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text)
    os.replace(tmp, path)


def _cell(value) -> str:
    return "" if value is None else repr(value) if isinstance(value, float) else str(value)


def kpi_csv_row(report: KpiReport) -> str:
    times = report.solve_times or (0.0,)
    return ",".join([
        report.policy, str(report.fleet_size), str(report.seed),
        str(report.horizon_epochs), str(report.requests), str(report.served),
        str(report.lost), _cell(report.avg_wait), _cell(report.market_share),
        _cell(report.profit), _cell(report.mileage),
        _cell(sum(times) / len(times)), _cell(max(times)),
    ])


def parse_kpi_csv(text: str) -> list[KpiReport]:
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines or lines[0] != KPI_HEADER:
        raise ScenarioError(f"KPI file must start with header: {KPI_HEADER}")
    reports = []
    for ln in lines[1:]:
        f = ln.split(",")
        reports.append(KpiReport(
            policy=f[0], fleet_size=int(f[1]), seed=int(f[2]),
            horizon_epochs=int(f[3]), requests=int(f[4]), served=int(f[5]),
            lost=int(f[6]), avg_wait=float(f[7]) if f[7] else None,
            market_share=float(f[8]), profit=float(f[9]), mileage=float(f[10]),
            solve_times=(float(f[11]),),
        ))
    return reports


def comparison_csv_row(row: ComparisonRow) -> str:
    return ",".join([
        row.policy, str(row.fleet_size), str(row.seed),
        _cell(row.wait_reduction_pct), _cell(row.share_improvement_pct),
        _cell(row.profit_improvement_pct), _cell(row.added_mileage_pct),
    ])


def _scenario_with_overrides(scenario: Scenario, tau: float | None, alpha: float | None) -> Scenario:
    if tau is None and alpha is None:
        return scenario
    econ = dataclasses.replace(
        scenario.econ,
        **{k: v for k, v in (("epoch_length", tau), ("alpha", alpha)) if v is not None},
    )
    return Scenario(
        cluster_count=scenario.cluster_count,
        centroids=scenario.centroids,
        demand=scenario.demand,
        travel_time=scenario.travel_time,
        econ=econ,
        rng_seed=scenario.rng_seed,
    )


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def cmd_ingest(args) -> int:
    records = read_trips(Path(args.trips).read_text())
    fragment = ingest_trips(
        records, args.clusters, args.tau, args.epoch_start,
        speed_kmh=args.speed_kmh, min_travel_min=args.min_travel_min,
        speed_factors=(args.speed_factors[0], args.speed_factors[1]),
        seed=args.seed,
    )
    econ = EconomicParams(**{
        **DEFAULT_ECON,
        "epoch_length": args.tau,
        "alpha": args.alpha,
    })
    scenario = scenario_from_ingest(fragment, econ, seed=args.seed)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    _atomic_write(out, serialize_scenario(scenario))
    per_epoch = scenario.demand.sum(axis=(1, 2))
    print(f"scenario written to {out}")
    print(f"clusters: {scenario.cluster_count}")
    print(f"trips in epoch windows: {per_epoch[0]:.0f}, {per_epoch[1]:.0f} "
          f"(of {len(records)} records)")
    return 0


def cmd_solve(args) -> int:
    scenario = load_scenario(Path(args.scenario).read_text())
    scenario = _scenario_with_overrides(scenario, args.tau, args.alpha)
    try:
        supply = tuple(int(s) for s in args.supply.split(","))
    except ValueError:
        raise ScenarioError("--supply must be a comma-separated integer vector")
    if len(supply) != scenario.cluster_count:
        raise ScenarioError(
            f"--supply has {len(supply)} entries for {scenario.cluster_count} clusters"
        )
    if sum(supply) == 0:
        print("supply is empty: no allocation to make")
        print("objective: 0.0")
        return 0
    fleet = FleetState(supply)
    graph = build_graph(scenario, fleet)
    profiles = build_profiles(graph)
    started = time.perf_counter()
    result = solve_cmcf(graph, profiles)
    elapsed = time.perf_counter() - started

    if args.dump_graph:
        caps = [p.capacity for p in profiles]
        _atomic_write(Path(args.dump_graph), graph.dump_edges(caps))
    if args.dump_curves:
        curve_dir = Path(args.dump_curves)
        curve_dir.mkdir(parents=True, exist_ok=True)
        for e, profile in enumerate(profiles):
            if profile.nonlinear:
                _atomic_write(curve_dir / f"edge_{e:04d}_{profile.kind.value}.csv",
                              dump_curve(profile))
    if args.trace:
        rows = ["iteration,splits,linearized_objective,objective"]
        rows += [f"{it},{sp},{lin!r},{obj!r}" for it, sp, lin, obj in result.trace]
        _atomic_write(Path(args.trace), "\n".join(rows) + "\n")
    if args.plots:
        from fleetflow.report import save_cost_curve_figure
        plot_dir = Path(args.plots)
        plot_dir.mkdir(parents=True, exist_ok=True)
        for e, profile in enumerate(profiles):
            if profile.nonlinear and profile.x_star > 0:
                save_cost_curve_figure(profile, plot_dir / f"edge_{e:04d}.png")

    print(f"objective: {result.objective!r}")
    print(f"iterations: {result.iterations} (bound {result.iteration_bound}), "
          f"segments added: {result.segments_added}, wall clock: {elapsed:.3f}s")
    totals = result.flows_by_class()
    print("flows by class: " + ", ".join(f"{k.value}={v}" for k, v in totals.items()))
    trips = result.trip_flows()
    if trips:
        print("trips (origin->destination: vehicles):")
        for (i, m), flow in sorted(trips.items()):
            print(f"  {i}->{m}: {flow}")
    moves = result.redistribution_flows()
    if moves:
        print("redistribution (origin->destination: vehicles):")
        for i, m, flow in moves:
            print(f"  {i}->{m}: {flow}")
    idle = {}
    for e, edge in enumerate(graph.edges):
        if edge.klass is EdgeClass.IDLE and result.edge_flows[e] > 0:
            cluster = edge.tail.cluster
            idle[cluster] = idle.get(cluster, 0) + int(result.edge_flows[e])
    if idle:
        print("idle/overflow per cluster:")
        for cluster, flow in sorted(idle.items()):
            print(f"  {cluster}: {flow}")
    return 0


def _run_one(scenario_text: str, tau, alpha, horizon: int, fleet: int, policy: str, seed: int):
    scenario = _scenario_with_overrides(load_scenario(scenario_text), tau, alpha)
    started = time.perf_counter()
    report, events = run(scenario, horizon, fleet, policy, seed)
    return report, events, time.perf_counter() - started


def cmd_simulate(args) -> int:
    spec_doc = json.loads(Path(args.spec).read_text())
    for key in ("scenario", "fleet_sizes", "policies", "seeds", "horizon_epochs", "out_dir"):
        if key not in spec_doc:
            raise ScenarioError(f"experiment spec missing key: {key}")
    scenario_path = Path(spec_doc["scenario"])
    if not scenario_path.is_absolute():
        scenario_path = Path(args.spec).parent / scenario_path
    scenario_text = scenario_path.read_text()
    load_scenario(scenario_text)  # fail fast on a bad scenario
    tau = args.tau if args.tau is not None else spec_doc.get("tau")
    alpha = args.alpha if args.alpha is not None else spec_doc.get("alpha")
    fleets = [int(f) for f in spec_doc["fleet_sizes"]]
    policies = [str(p) for p in spec_doc["policies"]]
    seeds = [int(s) for s in spec_doc["seeds"]]
    horizon = int(spec_doc["horizon_epochs"])
    if not fleets or not policies or not seeds:
        raise ScenarioError("experiment spec needs at least one fleet size, policy and seed")
    for policy in policies:
        if policy not in POLICY_NAMES:
            raise ScenarioError(f"unknown policy {policy!r} in experiment spec")
    out_dir = Path(args.out) if args.out else Path(spec_doc["out_dir"])
    out_dir.mkdir(parents=True, exist_ok=True)

    jobs = [(fleet, policy, seed) for fleet in fleets for seed in seeds for policy in policies]
    results: dict[tuple, tuple] = {}
    failures: dict[tuple, str] = {}
    if args.workers > 1:
        with concurrent.futures.ProcessPoolExecutor(max_workers=args.workers) as pool:
            futures = {
                job: pool.submit(_run_one, scenario_text, tau, alpha, horizon, *job)
                for job in jobs
            }
            for job, future in futures.items():
                try:
                    results[job] = future.result()
                except Exception as exc:  # report per-run failures, keep going
                    failures[job] = str(exc)
    else:
        for job in jobs:
            try:
                results[job] = _run_one(scenario_text, tau, alpha, horizon, *job)
            except Exception as exc:
                failures[job] = str(exc)

    manifest_runs = []
    comparison_rows: list[ComparisonRow] = []
    for fleet in fleets:
        for seed in seeds:
            group = []
            for policy in policies:
                job = (fleet, policy, seed)
                if job in failures:
                    print(f"run fleet={fleet} policy={policy} seed={seed} FAILED: {failures[job]}",
                          file=sys.stderr)
                    manifest_runs.append({"fleet": fleet, "policy": policy, "seed": seed,
                                          "status": "failed", "error": failures[job]})
                    continue
                report, events, wall = results[job]
                stem = f"{policy}_f{fleet}_s{seed}"
                kpi_file = out_dir / f"kpi_{stem}.csv"
                events_file = out_dir / f"events_{stem}.csv"
                _atomic_write(kpi_file, KPI_HEADER + "\n" + kpi_csv_row(report) + "\n")
                _atomic_write(events_file,
                              EVENT_HEADER + "\n" + "\n".join(ev.csv_row() for ev in events) + "\n")
                times = report.solve_times or (0.0,)
                manifest_runs.append({
                    "fleet": fleet, "policy": policy, "seed": seed, "status": "ok",
                    "kpi_file": kpi_file.name, "events_file": events_file.name,
                    "solve_time_mean_s": sum(times) / len(times),
                    "solve_time_max_s": max(times), "wall_clock_s": wall,
                })
                group.append(report)
                print(KPI_HEADER)
                print(kpi_csv_row(report))
            if any(r.policy == "none" for r in group):
                comparison_rows.extend(compare(group, "none"))

    if comparison_rows:
        text = COMPARISON_HEADER + "\n" + "\n".join(
            comparison_csv_row(row) for row in comparison_rows) + "\n"
        _atomic_write(out_dir / "comparison.csv", text)
        print(text, end="")
        if args.plots:
            from fleetflow.report import save_kpi_figure
            save_kpi_figure([row for row in comparison_rows if row.policy != "none"],
                            out_dir / "comparison.png")

    manifest = {
        "scenario": str(scenario_path),
        "tau": tau,
        "alpha": alpha,
        "horizon_epochs": horizon,
        "fleet_sizes": fleets,
        "policies": policies,
        "seeds": seeds,
        "runs": manifest_runs,
    }
    _atomic_write(out_dir / "manifest.json", json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return 1 if failures else 0


def cmd_compare(args) -> int:
    reports = []
    for path in args.kpis:
        reports.extend(parse_kpi_csv(Path(path).read_text()))
    groups: dict[tuple, list[KpiReport]] = {}
    for rep in reports:
        groups.setdefault((rep.fleet_size, rep.seed), []).append(rep)
    print(COMPARISON_HEADER)
    rows = []
    for key in sorted(groups):
        rows.extend(compare(groups[key], args.baseline))
    for row in rows:
        print(comparison_csv_row(row))
    if args.out:
        text = COMPARISON_HEADER + "\n" + "\n".join(comparison_csv_row(r) for r in rows) + "\n"
        _atomic_write(Path(args.out), text)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fleetflow", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="cluster a trip file into a scenario config")
    p.add_argument("trips", help="CSV of trip records")
    p.add_argument("--clusters", type=int, required=True)
    p.add_argument("--tau", type=float, default=DEFAULT_ECON["epoch_length"])
    p.add_argument("--alpha", type=float, default=DEFAULT_ECON["alpha"])
    p.add_argument("--epoch-start", type=float, default=0.0)
    p.add_argument("--speed-kmh", type=float, default=20.0)
    p.add_argument("--min-travel-min", type=float, default=3.0)
    p.add_argument("--speed-factors", type=float, nargs=2, default=(1.0, 1.0),
                   metavar=("EPOCH1", "EPOCH2"),
                   help="per-epoch congestion divisors applied to free-flow speed")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("solve", help="solve one allocation for a supply vector")
    p.add_argument("scenario")
    p.add_argument("--supply", required=True, help="comma-separated vehicles per cluster")
    p.add_argument("--tau", type=float, default=None)
    p.add_argument("--alpha", type=float, default=None)
    p.add_argument("--dump-graph", default=None, metavar="FILE")
    p.add_argument("--dump-curves", default=None, metavar="DIR")
    p.add_argument("--trace", default=None, metavar="FILE")
    p.add_argument("--plots", default=None, metavar="DIR")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("simulate", help="run an experiment spec of simulations")
    p.add_argument("spec", help="experiment spec JSON")
    p.add_argument("--tau", type=float, default=None)
    p.add_argument("--alpha", type=float, default=None)
    p.add_argument("--out", default=None, help="override the spec's out_dir")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--plots", action="store_true")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("compare", help="comparison table from stored KPI files")
    p.add_argument("kpis", nargs="+", help="KPI csv files")
    p.add_argument("--baseline", default="none")
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_compare)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ScenarioError, FileNotFoundError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # runtime fault
        print(f"fault: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

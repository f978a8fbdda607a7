"""Linear minimum-cost flow with integer data via primal network simplex.

Initialization uses an artificial root vertex with big-M arcs. The big-M cost
is kept symbolic (every cost is an integer multiple of M plus a float), which
makes the M = 1 + sum|c| * supply construction exact: reduced-cost signs in
the M dimension are computed in integer arithmetic and can never be swamped by
float rounding. Anti-cycling uses Bland's rule on the entering arc (smallest
arc id among violators); leaving-arc ties break on the smallest arc id.
Capacities and balances are integers, so all flows stay integral.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

#: state codes per arc
_AT_LOWER, _AT_UPPER, _IN_TREE = 0, 1, 2

#: entering-arc scan block; Bland only needs the first violating index
_SCAN_CHUNK = 1024


class SolverFault(RuntimeError):
    """Internal consistency failure (optimality certificate or accounting)."""


@dataclass(frozen=True)
class LinearFlowNetwork:
    """Directed network with integer balances/capacities and real arc costs.

    Balances follow the outflow-minus-inflow convention (positive = source).
    Infinite capacities are represented as total_supply + 1, which no flow can
    exceed. keys are opaque identifiers used to map arcs back to their origin
    (e.g. parallel-segment labels).
    """

    node_count: int
    balances: np.ndarray          # (n,) int64, sums to zero
    tails: np.ndarray             # (m,) int64
    heads: np.ndarray             # (m,) int64
    capacities: np.ndarray        # (m,) int64, finite
    costs: np.ndarray             # (m,) float64
    keys: tuple = ()

    @staticmethod
    def build(
        node_count: int,
        balances: Sequence[int],
        arcs: Iterable[tuple[int, int, int | None, float, object]],
    ) -> "LinearFlowNetwork":
        """Assemble a network; arcs are (tail, head, capacity_or_None, cost, key)."""
        balances = np.asarray(list(balances), dtype=np.int64)
        if len(balances) != node_count:
            raise ValueError("balances must cover every node")
        if balances.sum() != 0:
            raise ValueError("balances must sum to zero")
        total_supply = int(balances[balances > 0].sum())
        unbounded = total_supply + 1
        tails, heads, caps, costs, keys = [], [], [], [], []
        for tail, head, cap, cost, key in arcs:
            if not (0 <= tail < node_count and 0 <= head < node_count):
                raise ValueError(f"arc ({tail}, {head}) references unknown node")
            cap = unbounded if cap is None else int(cap)
            if cap < 0:
                raise ValueError(f"arc ({tail}, {head}) has negative capacity")
            tails.append(tail)
            heads.append(head)
            caps.append(cap)
            costs.append(float(cost))
            keys.append(key)
        return LinearFlowNetwork(
            node_count=node_count,
            balances=balances,
            tails=np.asarray(tails, dtype=np.int64),
            heads=np.asarray(heads, dtype=np.int64),
            capacities=np.asarray(caps, dtype=np.int64),
            costs=np.asarray(costs, dtype=np.float64),
            keys=tuple(keys),
        )

    @property
    def arc_count(self) -> int:
        return len(self.tails)

    @property
    def total_supply(self) -> int:
        return int(self.balances[self.balances > 0].sum())


@dataclass(frozen=True)
class FlowSolution:
    """Integer optimal flow per arc, or an infeasibility verdict."""

    status: str                       # "optimal" | "infeasible"
    flows: np.ndarray | None          # (m,) int64 on the network's arcs
    objective: float
    keys: tuple = ()
    potentials: np.ndarray | None = None        # float part of node potentials
    potentials_bigm: np.ndarray | None = None   # integer big-M multiples

    def flow_by_key(self) -> dict:
        return {key: int(x) for key, x in zip(self.keys, self.flows)}


def solve(network: LinearFlowNetwork, *, certify: bool = True) -> FlowSolution:
    """Network simplex; deterministic for a fixed network.

    Returns an integral optimal flow, or status "infeasible" when supply
    cannot reach the sinks under the capacities. With certify=True (default)
    the reduced-cost optimality conditions and the objective accounting are
    checked after the solve and raise SolverFault on failure.
    """
    n = network.node_count
    m = network.arc_count
    root = n
    supply = network.total_supply

    tails = np.concatenate([network.tails, np.zeros(n, dtype=np.int64)])
    heads = np.concatenate([network.heads, np.zeros(n, dtype=np.int64)])
    caps = np.concatenate([network.capacities,
                           np.full(n, supply + 1, dtype=np.int64)])
    cost_r = np.concatenate([network.costs, np.zeros(n)])
    cost_m = np.concatenate([np.zeros(m, dtype=np.int64),
                             np.ones(n, dtype=np.int64)])
    flows = np.zeros(m + n, dtype=np.int64)
    state = np.full(m + n, _AT_LOWER, dtype=np.int8)

    tree_adj: list[set[int]] = [set() for _ in range(n + 1)]
    for v in range(n):
        a = m + v
        b = int(network.balances[v])
        if b > 0:
            tails[a], heads[a] = v, root
        else:
            tails[a], heads[a] = root, v
        flows[a] = abs(b)
        state[a] = _IN_TREE
        tree_adj[v].add(a)
        tree_adj[root].add(a)

    parent = np.full(n + 1, -1, dtype=np.int64)
    parent_arc = np.full(n + 1, -1, dtype=np.int64)
    depth = np.zeros(n + 1, dtype=np.int64)
    pot_r = np.zeros(n + 1, dtype=np.float64)
    pot_m = np.zeros(n + 1, dtype=np.int64)

    def refresh_tree() -> None:
        """Recompute parent/depth/potentials by walking the spanning tree."""
        seen = np.zeros(n + 1, dtype=bool)
        seen[root] = True
        parent[root] = -1
        parent_arc[root] = -1
        depth[root] = 0
        pot_r[root] = 0.0
        pot_m[root] = 0
        stack = [root]
        count = 1
        while stack:
            x = stack.pop()
            for a in tree_adj[x]:
                other = int(heads[a]) if int(tails[a]) == x else int(tails[a])
                if seen[other]:
                    continue
                seen[other] = True
                count += 1
                parent[other] = x
                parent_arc[other] = a
                depth[other] = depth[x] + 1
                # tree arcs have zero reduced cost: c - pot[tail] + pot[head] = 0
                if int(tails[a]) == x:
                    pot_r[other] = pot_r[x] + cost_r[a]
                    pot_m[other] = pot_m[x] + cost_m[a]
                else:
                    pot_r[other] = pot_r[x] - cost_r[a]
                    pot_m[other] = pot_m[x] - cost_m[a]
                stack.append(other)
        if count != n + 1:  # pragma: no cover
            raise SolverFault("spanning tree lost connectivity")

    refresh_tree()

    eps = 1e-9 * max(1.0, float(np.abs(network.costs).max()) if m else 1.0)
    objective_r = float(np.dot(cost_r, flows))
    objective_m = int(np.dot(cost_m, flows))

    def find_entering() -> int:
        """Smallest-index arc violating its bound optimality condition."""
        for start in range(0, m + n, _SCAN_CHUNK):
            stop = min(start + _SCAN_CHUNK, m + n)
            sl = slice(start, stop)
            rc_m = cost_m[sl] - pot_m[tails[sl]] + pot_m[heads[sl]]
            rc_r = cost_r[sl] - pot_r[tails[sl]] + pot_r[heads[sl]]
            neg = (rc_m < 0) | ((rc_m == 0) & (rc_r < -eps))
            pos = (rc_m > 0) | ((rc_m == 0) & (rc_r > eps))
            eligible = ((state[sl] == _AT_LOWER) & neg) | ((state[sl] == _AT_UPPER) & pos)
            if eligible.any():
                return start + int(np.argmax(eligible))
        return -1

    while True:
        e = find_entering()
        if e < 0:
            break
        increase = state[e] == _AT_LOWER
        # push orientation p -> q through the entering arc
        p, q = (int(tails[e]), int(heads[e])) if increase else (int(heads[e]), int(tails[e]))

        # collect cycle arcs: (residual, arc id, +1 forward / -1 backward)
        entering_residual = int(caps[e] - flows[e]) if increase else int(flows[e])
        cycle: list[tuple[int, int, int]] = [(entering_residual, e, 1 if increase else -1)]
        x, y = p, q
        while depth[x] > depth[y]:
            a = int(parent_arc[x])
            # push direction on the p side runs parent -> x
            fwd = int(heads[a]) == x
            cycle.append((int(caps[a] - flows[a]) if fwd else int(flows[a]), a, 1 if fwd else -1))
            x = int(parent[x])
        while depth[y] > depth[x]:
            a = int(parent_arc[y])
            # push direction on the q side runs y -> parent
            fwd = int(tails[a]) == y
            cycle.append((int(caps[a] - flows[a]) if fwd else int(flows[a]), a, 1 if fwd else -1))
            y = int(parent[y])
        while x != y:
            a = int(parent_arc[x])
            fwd = int(heads[a]) == x
            cycle.append((int(caps[a] - flows[a]) if fwd else int(flows[a]), a, 1 if fwd else -1))
            x = int(parent[x])
            a = int(parent_arc[y])
            fwd = int(tails[a]) == y
            cycle.append((int(caps[a] - flows[a]) if fwd else int(flows[a]), a, 1 if fwd else -1))
            y = int(parent[y])

        delta = min(res for res, _, _ in cycle)
        leaving = min(a for res, a, _ in cycle if res == delta)

        rc_m_e = int(cost_m[e] - pot_m[tails[e]] + pot_m[heads[e]])
        rc_r_e = float(cost_r[e] - pot_r[tails[e]] + pot_r[heads[e]])
        sign = 1 if increase else -1
        objective_m += delta * sign * rc_m_e
        objective_r += delta * sign * rc_r_e

        if delta:
            for _, a, direction in cycle:
                flows[a] += direction * delta

        if leaving == e:
            state[e] = _AT_UPPER if increase else _AT_LOWER
            continue
        # basis exchange: entering joins the tree, leaving drops to a bound
        state[e] = _IN_TREE
        tree_adj[int(tails[e])].add(e)
        tree_adj[int(heads[e])].add(e)
        state[leaving] = _AT_LOWER if flows[leaving] == 0 else _AT_UPPER
        tree_adj[int(tails[leaving])].discard(leaving)
        tree_adj[int(heads[leaving])].discard(leaving)
        refresh_tree()

    if flows[m:].any():
        return FlowSolution(status="infeasible", flows=None, objective=float("nan"),
                            keys=network.keys)

    real_flows = flows[:m].copy()
    objective = float(np.dot(network.costs, real_flows))
    if certify:
        _certify(network, real_flows, state[:m], pot_r[:n + 1], pot_m[:n + 1],
                 objective, objective_r, objective_m, eps)
    return FlowSolution(
        status="optimal",
        flows=real_flows,
        objective=objective,
        keys=network.keys,
        potentials=pot_r[:n].copy(),
        potentials_bigm=pot_m[:n].copy(),
    )


def _certify(network, flows, state, pot_r, pot_m, objective, objective_r,
             objective_m, eps) -> None:
    """Reduced-cost optimality certificate plus objective accounting."""
    if objective_m != 0:
        raise SolverFault("big-M objective component nonzero on a feasible solve")
    scale = max(1.0, abs(objective))
    if abs(objective_r - objective) > 1e-6 * scale:
        raise SolverFault(
            f"objective accounting drifted: pivots say {objective_r!r}, flows say {objective!r}"
        )
    rc_m = -pot_m[network.tails] + pot_m[network.heads]
    rc_r = network.costs - pot_r[network.tails] + pot_r[network.heads]
    tol = max(eps, 1e-7 * max(1.0, float(np.abs(network.costs).max()) if len(flows) else 1.0))
    lower = state == _AT_LOWER
    upper = state == _AT_UPPER
    bad_lower = lower & ((rc_m < 0) | ((rc_m == 0) & (rc_r < -tol)))
    bad_upper = upper & ((rc_m > 0) | ((rc_m == 0) & (rc_r > tol)))
    if bad_lower.any() or bad_upper.any():
        a = int(np.argmax(bad_lower | bad_upper))
        raise SolverFault(f"optimality certificate failed at arc {a} (rc={rc_r[a]!r})")
    if np.any(flows < 0) or np.any(flows > network.capacities):
        raise SolverFault("flow left its bounds")


def max_flow_feasibility(network: LinearFlowNetwork) -> int:
    """Maximum routable supply from sources to sinks (Edmonds-Karp on real arcs).

    Equals total supply iff the instance is feasible.
    """
    n = network.node_count
    s, t = n, n + 1
    tails = [int(v) for v in network.tails]
    heads = [int(v) for v in network.heads]
    caps = [int(c) for c in network.capacities]
    for v in range(n):
        b = int(network.balances[v])
        if b > 0:
            tails.append(s)
            heads.append(v)
            caps.append(b)
        elif b < 0:
            tails.append(v)
            heads.append(t)
            caps.append(-b)

    arc_count = len(tails)
    adj: list[list[int]] = [[] for _ in range(n + 2)]
    # residual arcs come in (forward, reverse) pairs at indices 2a, 2a+1
    res = []
    for a in range(arc_count):
        adj[tails[a]].append(2 * a)
        adj[heads[a]].append(2 * a + 1)
        res.append(caps[a])
        res.append(0)

    total = 0
    while True:
        prev = [-1] * (n + 2)
        prev_arc = [-1] * (n + 2)
        prev[s] = s
        queue = [s]
        while queue and prev[t] == -1:
            nxt = []
            for x in queue:
                for ra in adj[x]:
                    if res[ra] <= 0:
                        continue
                    a, rev = divmod(ra, 2)
                    other = tails[a] if rev else heads[a]
                    if prev[other] == -1:
                        prev[other] = x
                        prev_arc[other] = ra
                        nxt.append(other)
            queue = nxt
        if prev[t] == -1:
            return total
        bottleneck = None
        x = t
        while x != s:
            ra = prev_arc[x]
            bottleneck = res[ra] if bottleneck is None else min(bottleneck, res[ra])
            x = prev[x]
        x = t
        while x != s:
            ra = prev_arc[x]
            res[ra] -= bottleneck
            res[ra ^ 1] += bottleneck
            x = prev[x]
        total += bottleneck


def to_dimacs(network: LinearFlowNetwork) -> str:
    """DIMACS-like text dump (1-based nodes, float costs) for cross-checking."""
    lines = [
        "c fleetflow min-cost flow instance (costs are floats)",
        f"p min {network.node_count} {network.arc_count}",
    ]
    for v in range(network.node_count):
        b = int(network.balances[v])
        if b != 0:
            lines.append(f"n {v + 1} {b}")
    for a in range(network.arc_count):
        lines.append(
            f"a {int(network.tails[a]) + 1} {int(network.heads[a]) + 1} 0 "
            f"{int(network.capacities[a])} {float(network.costs[a])!r}"
        )
    return "\n".join(lines) + "\n"

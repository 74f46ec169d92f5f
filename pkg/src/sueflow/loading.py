"""Smoothed shortest paths and network loading.

The dual problem's smooth part is the demand-weighted soft-min travel cost
over all level-1 routes, where a portal edge's weight is the soft-min cost
of its target OD trip one level down. This module computes that value, its
gradient (minus the edge flows, obtained by propagating demand with logit
edge-choice probabilities), and the primal/dual objectives used for gap
certification.

Soft-min distances on a DAG level are exact in one reverse-topological
pass. Cyclic levels, admitted only with a walk cap, iterate the relaxation
and then sum over walks rather than simple paths.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping, Sequence

from .model import LevelGraph, NetworkHierarchy, topological_order

__all__ = [
    "LoadResult",
    "LoadingError",
    "NoPathError",
    "CapExceededError",
    "MassLeakError",
    "softmin_potentials",
    "hierarchical_weights",
    "dual_smooth_value",
    "network_loading",
    "entropy_term",
    "primal_objective",
    "surrogate_primal",
    "dual_objective",
    "verify_conservation",
]

_STABILIZE_RTOL = 1e-14  # relative settle tolerance for the capped relaxation
_MASS_TOL = 1e-9  # leak budget for outgoing choice probabilities


class LoadingError(Exception):
    pass


class NoPathError(LoadingError):
    pass


class CapExceededError(LoadingError):
    pass


class MassLeakError(LoadingError):
    pass


@dataclass
class LoadResult:
    """One loading at a fixed dual point.

    ``smooth_value`` is the demand-weighted soft-min cost with flipped sign
    (the smooth dual term), ``flows`` covers every edge of every level,
    ``induced_demands`` holds the per-level OD demands (exogenous at level
    1, portal flows below), and ``entropies`` the per-level trajectory
    entropies of the logit route choice, weighted by demand. Minus the
    gamma-weighted entropy sum is the nested entropy term of the primal
    objective, which makes the primal computable without enumerating paths.
    """

    smooth_value: float
    flows: list[list[float]]
    induced_demands: list[list[float]]
    entropies: list[float]

    def flow_maps(self, net: NetworkHierarchy) -> list[dict[str, float]]:
        out = []
        for level, values in zip(net.levels, self.flows):
            out.append({e.id: v for e, v in zip(level.edges, values)})
        return out

    def plain_flows(self, net: NetworkHierarchy) -> list[float]:
        return [self.flows[k][i] for k, i in net.plain_edge_order()]


class _LevelTopo:
    """Index structures for one level, shared across loadings."""

    __slots__ = (
        "n_nodes",
        "node_index",
        "tails",
        "heads",
        "out_edges",
        "in_edges",
        "topo",
        "od_nodes",
        "portal_for_od",
        "plain_positions",
    )

    def __init__(self, level: LevelGraph) -> None:
        self.node_index = {v: i for i, v in enumerate(level.nodes)}
        self.n_nodes = len(level.nodes)
        self.tails = [self.node_index[e.tail] for e in level.edges]
        self.heads = [self.node_index[e.head] for e in level.edges]
        self.out_edges: list[list[int]] = [[] for _ in level.nodes]
        self.in_edges: list[list[int]] = [[] for _ in level.nodes]
        for pos, (t, h) in enumerate(zip(self.tails, self.heads)):
            self.out_edges[t].append(pos)
            self.in_edges[h].append(pos)
        order = topological_order(level)
        self.topo = None if order is None else [self.node_index[v] for v in order]
        self.od_nodes = [
            (self.node_index[od.origin], self.node_index[od.destination])
            for od in level.od_pairs
        ]
        self.portal_for_od: dict[int, int] = {}
        for pos, e in enumerate(level.edges):
            if e.is_portal:
                self.portal_for_od[e.target_od.od] = pos
        self.plain_positions = [pos for pos, e in enumerate(level.edges) if e.is_plain]


def _topologies(net: NetworkHierarchy) -> list[_LevelTopo]:
    if net._topologies is None:
        net._topologies = [_LevelTopo(level) for level in net.levels]
    return net._topologies


def _lse_min(terms: list[float], gamma: float) -> float:
    """-gamma * log sum exp(-term/gamma) with max shift; +inf on empty input."""
    best = math.inf
    for w in terms:
        if w < best:
            best = w
    if best == math.inf:
        return math.inf
    acc = 0.0
    for w in terms:
        acc += math.exp((best - w) / gamma)
    return best - gamma * math.log(acc)


def _softmin(
    topo: _LevelTopo, weights: Sequence[float], gamma: float, dst: int, cap: int | None
) -> list[float]:
    """Soft-min distance to ``dst`` per node; destination is absorbing."""
    rho = [math.inf] * topo.n_nodes
    rho[dst] = 0.0
    if topo.topo is not None:
        for v in reversed(topo.topo):
            if v == dst:
                continue
            terms = [weights[e] + rho[topo.heads[e]] for e in topo.out_edges[v]]
            rho[v] = _lse_min(terms, gamma)
        return rho
    if cap is None:
        raise CapExceededError("cyclic level graph requires an explicit walk-length cap")
    for _ in range(cap):
        nxt = [math.inf] * topo.n_nodes
        nxt[dst] = 0.0
        moved = 0.0
        for v in range(topo.n_nodes):
            if v == dst:
                continue
            terms = [weights[e] + rho[topo.heads[e]] for e in topo.out_edges[v]]
            nxt[v] = _lse_min(terms, gamma)
            if nxt[v] != rho[v]:
                if math.isinf(rho[v]):
                    moved = math.inf
                else:
                    moved = max(moved, abs(nxt[v] - rho[v]) / (1.0 + abs(nxt[v])))
        rho = nxt
        if moved <= _STABILIZE_RTOL:
            return rho
    raise CapExceededError(
        f"soft-min relaxation did not stabilise within the {cap}-round walk cap"
    )


def softmin_potentials(
    level: LevelGraph,
    weights: Mapping[str, float],
    gamma: float,
    dest: str,
    cap: int | None = None,
) -> dict[str, float]:
    """Soft-min distance from every node to ``dest`` under per-edge weights.

    Unreachable nodes map to ``+inf``. The value at a trip's origin is the
    smoothed trip cost; it tends to the shortest-path distance as
    ``gamma -> 0``.
    """
    if gamma <= 0.0:
        raise ValueError(f"gamma must be positive, got {gamma}")
    topo = _LevelTopo(level)
    if dest not in topo.node_index:
        raise ValueError(f"unknown destination node {dest!r}")
    w = [float(weights[e.id]) for e in level.edges]
    rho = _softmin(topo, w, gamma, topo.node_index[dest], cap)
    return {v: rho[i] for v, i in topo.node_index.items()}


def _sweep_weights(
    net: NetworkHierarchy, t: Sequence[float]
) -> tuple[list[list[float]], list[list[list[float]]]]:
    """Bottom-up pass: per-level edge weights and per-OD soft-min fields.

    A portal edge's weight is the soft-min trip cost of its target OD pair
    one level down, so levels are processed deepest first.
    """
    topos = _topologies(net)
    m = net.num_levels
    weights: list[list[float] | None] = [None] * m
    rho_fields: list[list[list[float]]] = [[] for _ in range(m)]
    trip_cost: list[list[float]] = [[] for _ in range(m)]

    flat_pos = 0
    plain_values: list[list[float]] = [[] for _ in range(m)]
    for k, _ in net.plain_edge_order():
        plain_values[k].append(float(t[flat_pos]))
        flat_pos += 1

    for k in range(m - 1, -1, -1):
        level, topo = net.levels[k], topos[k]
        w = [0.0] * len(level.edges)
        it = iter(plain_values[k])
        for pos, edge in enumerate(level.edges):
            if edge.is_plain:
                w[pos] = next(it)
            else:
                w[pos] = trip_cost[k + 1][edge.target_od.od]
        weights[k] = w
        gamma = net.gammas[k]
        for j, (src, dst) in enumerate(topo.od_nodes):
            rho = _softmin(topo, w, gamma, dst, net.walk_cap)
            if math.isinf(rho[src]):
                od = level.od_pairs[j]
                raise NoPathError(
                    f"no path {od.origin!r} -> {od.destination!r} at level {k + 1}"
                )
            rho_fields[k].append(rho)
            trip_cost[k].append(rho[src])
    return weights, rho_fields


def hierarchical_weights(net: NetworkHierarchy, t: Sequence[float]) -> list[dict[str, float]]:
    """Per-level edge weights at dual point ``t`` (portal entries filled in)."""
    weights, _ = _sweep_weights(net, t)
    out = []
    for level, w in zip(net.levels, weights):
        out.append({e.id: w[pos] for pos, e in enumerate(level.edges)})
    return out


def dual_smooth_value(net: NetworkHierarchy, t: Sequence[float]) -> float:
    """Smooth dual term: minus the demand-weighted soft-min trip costs."""
    _, rho_fields = _sweep_weights(net, t)
    topos = _topologies(net)
    total = 0.0
    for j, od in enumerate(net.levels[0].od_pairs):
        src = topos[0].od_nodes[j][0]
        total -= od.demand * rho_fields[0][j][src]
    return total


def _forward_dag(
    topo: _LevelTopo,
    weights: Sequence[float],
    rho: Sequence[float],
    gamma: float,
    src: int,
    dst: int,
    demand: float,
    flows: list[float],
) -> float:
    """Propagate ``demand`` from ``src``; returns the trajectory entropy."""
    through = [0.0] * topo.n_nodes
    through[src] = demand
    entropy = 0.0
    for v in topo.topo:
        h = through[v]
        if h <= 0.0 or v == dst:
            continue
        if math.isinf(rho[v]):
            raise NoPathError("flow reached a node with no route to the destination")
        probs = [
            math.exp((rho[v] - weights[e] - rho[topo.heads[e]]) / gamma)
            for e in topo.out_edges[v]
        ]
        mass = sum(probs)
        if abs(mass - 1.0) > _MASS_TOL:
            raise MassLeakError(f"outgoing choice probabilities sum to {mass}")
        local = 0.0
        for e, p in zip(topo.out_edges[v], probs):
            p /= mass  # exact conservation; the raw sum is 1 up to rounding
            if p > 0.0:
                local -= p * math.log(p)
                flows[e] += h * p
                through[topo.heads[e]] += h * p
        entropy += h * local
    return entropy


def _forward_cyclic(
    topo: _LevelTopo,
    weights: Sequence[float],
    rho: Sequence[float],
    gamma: float,
    src: int,
    dst: int,
    demand: float,
    flows: list[float],
    cap: int,
) -> float:
    """Walk-measure loading: expected node visits solve h = b + P^T h."""
    probs: list[float] = [0.0] * len(weights)
    for v in range(topo.n_nodes):
        if v == dst or math.isinf(rho[v]):
            continue
        mass = 0.0
        for e in topo.out_edges[v]:
            p = math.exp((rho[v] - weights[e] - rho[topo.heads[e]]) / gamma)
            probs[e] = p
            mass += p
        if abs(mass - 1.0) > _MASS_TOL:
            raise MassLeakError(f"outgoing choice probabilities sum to {mass}")
        for e in topo.out_edges[v]:
            probs[e] /= mass
    through = [0.0] * topo.n_nodes
    through[src] = demand
    for _ in range(64 * cap):
        nxt = [0.0] * topo.n_nodes
        nxt[src] = demand
        for v in range(topo.n_nodes):
            if v == dst or through[v] <= 0.0 or math.isinf(rho[v]):
                continue
            for e in topo.out_edges[v]:
                nxt[topo.heads[e]] += through[v] * probs[e]
        moved = max(abs(a - b) for a, b in zip(nxt, through))
        through = nxt
        if moved <= 1e-15 * (1.0 + demand):
            break
    else:
        raise CapExceededError("walk loading did not stabilise under the cap")
    entropy = 0.0
    for v in range(topo.n_nodes):
        h = through[v]
        if h <= 0.0 or v == dst or math.isinf(rho[v]):
            continue
        local = 0.0
        for e in topo.out_edges[v]:
            p = probs[e]
            if p > 0.0:
                local -= p * math.log(p)
                flows[e] += h * p
        entropy += h * local
    return entropy


def network_loading(net: NetworkHierarchy, t: Sequence[float]) -> LoadResult:
    """Edge flows induced by logit route choice at dual point ``t``.

    The plain-edge flows are minus the gradient of ``dual_smooth_value``
    componentwise. Portal flows become the next level's OD demands, so the
    sweep runs top-down after the bottom-up weight pass.
    """
    weights, rho_fields = _sweep_weights(net, t)
    topos = _topologies(net)
    m = net.num_levels

    demands: list[list[float]] = [[] for _ in range(m)]
    demands[0] = [od.demand for od in net.levels[0].od_pairs]
    flows: list[list[float]] = []
    entropies: list[float] = []
    smooth = 0.0
    for k in range(m):
        level, topo, gamma = net.levels[k], topos[k], net.gammas[k]
        level_flows = [0.0] * len(level.edges)
        level_entropy = 0.0
        for j, (src, dst) in enumerate(topo.od_nodes):
            d = demands[k][j]
            if k == 0:
                smooth -= d * rho_fields[0][j][src]
            if d <= 0.0 or src == dst:
                continue
            if topo.topo is not None:
                level_entropy += _forward_dag(
                    topo, weights[k], rho_fields[k][j], gamma, src, dst, d, level_flows
                )
            else:
                level_entropy += _forward_cyclic(
                    topo,
                    weights[k],
                    rho_fields[k][j],
                    gamma,
                    src,
                    dst,
                    d,
                    level_flows,
                    net.walk_cap,
                )
        flows.append(level_flows)
        entropies.append(level_entropy)
        if k + 1 < m:
            demands[k + 1] = [
                level_flows[topo.portal_for_od[j]]
                for j in range(len(net.levels[k + 1].od_pairs))
            ]
    return LoadResult(
        smooth_value=smooth, flows=flows, induced_demands=demands, entropies=entropies
    )


def entropy_term(net: NetworkHierarchy, result: LoadResult) -> float:
    """Nested entropy part of the primal objective for one loading."""
    return -sum(g * e for g, e in zip(net.gammas, result.entropies))


def primal_objective(
    net: NetworkHierarchy,
    paths: Mapping[tuple[int, int], Mapping[tuple[str, ...], float]],
    flows: Sequence[Sequence[float]],
    rtol: float = 1e-8,
) -> float:
    """Cost integrals plus nested route entropy at an explicit path assignment.

    ``paths`` maps (level, od index) to per-route flows keyed by edge-id
    sequences; ``flows`` gives every edge flow per level. The two must be
    consistent: routes reproduce the edge flows, per-OD route flows sum to
    the demand (exogenous at level 1, the binding portal flow below).
    """
    m = net.num_levels
    edge_pos = [
        {e.id: pos for pos, e in enumerate(level.edges)} for level in net.levels
    ]

    recovered = [[0.0] * len(level.edges) for level in net.levels]
    entropy_sum = 0.0
    for k in range(m):
        gamma = net.gammas[k]
        for j, od in enumerate(net.levels[k].od_pairs):
            table = paths.get((k, j), {})
            if k == 0:
                demand = od.demand
            else:
                portal = _topologies(net)[k - 1].portal_for_od[j]
                demand = flows[k - 1][portal]
            total = 0.0
            for route, x in table.items():
                if x < 0.0:
                    raise ValueError(f"negative path flow {x} on {route} (level {k + 1})")
                total += x
                for eid in route:
                    recovered[k][edge_pos[k][eid]] += x
            if abs(total - demand) > rtol * (1.0 + abs(demand)):
                raise ValueError(
                    f"path flows for level-{k + 1} OD {j} sum to {total}, demand is {demand}"
                )
            if demand > 0.0:
                od_entropy = 0.0
                for x in table.values():
                    if x > 0.0:
                        od_entropy += x * math.log(x / demand)
                entropy_sum += gamma * od_entropy

    scale = max((abs(v) for level in flows for v in level), default=1.0)
    for k, level in enumerate(net.levels):
        for pos in range(len(level.edges)):
            if abs(recovered[k][pos] - flows[k][pos]) > rtol * (1.0 + scale):
                raise ValueError(
                    f"edge {level.edges[pos].id!r} at level {k + 1}: path flows give "
                    f"{recovered[k][pos]}, edge flow is {flows[k][pos]}"
                )

    integral_sum = 0.0
    for k, level in enumerate(net.levels):
        for pos in _topologies(net)[k].plain_positions:
            integral_sum += level.edges[pos].cost.integral(flows[k][pos])
    return integral_sum + entropy_sum


def surrogate_primal(
    net: NetworkHierarchy, flows: Sequence[Sequence[float]], entropy: float
) -> float:
    """Path-free primal value: cost integrals at the flows plus a supplied
    nested-entropy term (exact for one loading, an upper bound for averages)."""
    total = entropy
    for k, level in enumerate(net.levels):
        for pos in _topologies(net)[k].plain_positions:
            total += level.edges[pos].cost.integral(flows[k][pos])
    return total


def dual_objective(net: NetworkHierarchy, t: Sequence[float]) -> float:
    """Objective the solver minimises: smooth term plus conjugate penalties."""
    composite = 0.0
    for cost, value in zip(net.plain_costs(), t, strict=True):
        c = cost.conjugate(value)
        if math.isinf(c):
            raise ValueError(f"time {value} outside the conjugate domain")
        composite += c
    return dual_smooth_value(net, t) + composite


def verify_conservation(
    net: NetworkHierarchy, result: LoadResult, tol: float = 1e-9
) -> None:
    """Raise unless flow balances at every node and portals feed demands."""
    for k, level in enumerate(net.levels):
        topo = _topologies(net)[k]
        scale = 1.0 + max((abs(v) for v in result.flows[k]), default=0.0)
        balance = [0.0] * topo.n_nodes
        for pos in range(len(level.edges)):
            balance[topo.tails[pos]] -= result.flows[k][pos]
            balance[topo.heads[pos]] += result.flows[k][pos]
        for j, (src, dst) in enumerate(topo.od_nodes):
            d = result.induced_demands[k][j]
            balance[src] += d
            balance[dst] -= d
        for v, residual in enumerate(balance):
            if abs(residual) > tol * scale:
                raise AssertionError(
                    f"flow imbalance {residual} at node {level.nodes[v]!r}, level {k + 1}"
                )
        if k + 1 < net.num_levels:
            for j in range(len(net.levels[k + 1].od_pairs)):
                portal_flow = result.flows[k][topo.portal_for_od[j]]
                if abs(portal_flow - result.induced_demands[k + 1][j]) > tol * scale:
                    raise AssertionError(
                        f"portal flow and induced demand disagree for level-{k + 2} OD {j}"
                    )

"""Shared builders: hand-made instances and a random-hierarchy generator."""

from __future__ import annotations

from pathlib import Path

import numpy as np
import pytest

from sueflow import (
    AffineCost,
    ConstantCost,
    Edge,
    LevelGraph,
    NetworkHierarchy,
    ODPair,
    ODRef,
    PowerCost,
)
from sueflow.cli import parse_network

FIXTURES = Path(__file__).parent / "fixtures"


def parallel_net(costs, demand=1.0, gamma=1.0) -> NetworkHierarchy:
    """Single level, one OD, one parallel edge per cost."""
    edges = tuple(
        Edge(id=f"e{i + 1}", tail="o", head="d", cost=c) for i, c in enumerate(costs)
    )
    level = LevelGraph(
        nodes=("o", "d"), edges=edges, od_pairs=(ODPair("o", "d", demand),)
    )
    return NetworkHierarchy(levels=[level], gammas=[gamma])


def two_edge_net() -> NetworkHierarchy:
    return parallel_net([AffineCost(1.0, 1.0), AffineCost(2.0, 1.0)])


def diamond_net(demand=1.0, gamma=1.0) -> NetworkHierarchy:
    level = LevelGraph(
        nodes=("o", "a", "b", "d"),
        edges=(
            Edge(id="oa", tail="o", head="a", cost=AffineCost(1.0, 1.0)),
            Edge(id="ad", tail="a", head="d", cost=AffineCost(1.0, 1.0)),
            Edge(id="ob", tail="o", head="b", cost=AffineCost(1.2, 0.5)),
            Edge(id="bd", tail="b", head="d", cost=AffineCost(0.8, 0.5)),
        ),
        od_pairs=(ODPair("o", "d", demand),),
    )
    return NetworkHierarchy(levels=[level], gammas=[gamma])


def chain3_net() -> NetworkHierarchy:
    """Three single-route levels: plain weight 2 + portal, 3 + portal, 4."""
    level1 = LevelGraph(
        nodes=("o", "a", "d"),
        edges=(
            Edge(id="c1", tail="o", head="a", cost=ConstantCost(2.0)),
            Edge(id="g1", tail="a", head="d", target_od=ODRef(1, 0)),
        ),
        od_pairs=(ODPair("o", "d", 1.0),),
    )
    level2 = LevelGraph(
        nodes=("u", "x", "w"),
        edges=(
            Edge(id="c2", tail="u", head="x", cost=ConstantCost(3.0)),
            Edge(id="g2", tail="x", head="w", target_od=ODRef(2, 0)),
        ),
        od_pairs=(ODPair("u", "w"),),
    )
    level3 = LevelGraph(
        nodes=("s", "t"),
        edges=(Edge(id="c3", tail="s", head="t", cost=ConstantCost(4.0)),),
        od_pairs=(ODPair("s", "t"),),
    )
    return NetworkHierarchy(levels=[level1, level2, level3], gammas=[1.0, 1.0, 1.0])


def three_level_net() -> NetworkHierarchy:
    """Three levels with real route choice at every level."""
    level1 = LevelGraph(
        nodes=("o", "a", "d"),
        edges=(
            Edge(id="oa", tail="o", head="a", cost=AffineCost(1.0, 0.6)),
            Edge(id="g1", tail="a", head="d", target_od=ODRef(1, 0)),
            Edge(id="od", tail="o", head="d", cost=AffineCost(2.2, 0.4)),
        ),
        od_pairs=(ODPair("o", "d", 1.5),),
    )
    level2 = LevelGraph(
        nodes=("u", "x", "w"),
        edges=(
            Edge(id="ux", tail="u", head="x", cost=AffineCost(0.4, 0.5)),
            Edge(id="g2", tail="x", head="w", target_od=ODRef(2, 0)),
            Edge(id="uw", tail="u", head="w", cost=AffineCost(1.1, 0.7)),
        ),
        od_pairs=(ODPair("u", "w"),),
    )
    level3 = LevelGraph(
        nodes=("s", "t"),
        edges=(
            Edge(id="s1", tail="s", head="t", cost=AffineCost(0.3, 0.9)),
            Edge(id="s2", tail="s", head="t", cost=PowerCost(0.35, 0.2, 1.0, 2.0)),
        ),
        od_pairs=(ODPair("s", "t"),),
    )
    return NetworkHierarchy(levels=[level1, level2, level3], gammas=[1.0, 0.7, 0.5])


@pytest.fixture(scope="session")
def two_level_net() -> NetworkHierarchy:
    return parse_network(FIXTURES / "two_level.json")


def random_hierarchy(seed: int) -> tuple[NetworkHierarchy, list[float]]:
    """Small random valid hierarchy plus a dual point near free flow.

    Levels are DAGs over ordered nodes with a guaranteed origin-destination
    chain; portal edges at level k bind bijectively to level k+1 OD pairs.
    Free-flow times sit in a narrow band so no route's choice probability
    underflows, which keeps finite-difference gradient checks meaningful.
    """
    rng = np.random.default_rng(seed)
    m = int(rng.integers(1, 4))
    portal_counts = [int(rng.integers(1, 3)) for _ in range(m - 1)] + [0]

    levels: list[LevelGraph] = []
    total_edges = 0
    for k in range(m):
        n_nodes = int(rng.integers(3, 6))
        names = [f"L{k}n{i}" for i in range(n_nodes)]
        edges = []

        def plain_cost():
            t0 = float(rng.uniform(1.0, 1.3))
            kind = rng.integers(0, 3)
            if kind == 0:
                return ConstantCost(t0)
            if kind == 1:
                return AffineCost(t0, float(rng.uniform(0.3, 1.5)))
            return PowerCost(
                t0,
                float(rng.uniform(0.1, 0.3)),
                float(rng.uniform(0.8, 2.0)),
                float(rng.integers(2, 5)),
            )

        # chain guaranteeing a route from node 0 to the last node
        chain = [0]
        while chain[-1] != n_nodes - 1:
            nxt = int(rng.integers(chain[-1] + 1, n_nodes))
            chain.append(nxt)
        eid = 0
        for a, b in zip(chain, chain[1:]):
            edges.append(Edge(f"L{k}e{eid}", names[a], names[b], cost=plain_cost()))
            eid += 1
        extra = int(rng.integers(0, 4))
        for _ in range(extra):
            a = int(rng.integers(0, n_nodes - 1))
            b = int(rng.integers(a + 1, n_nodes))
            edges.append(Edge(f"L{k}e{eid}", names[a], names[b], cost=plain_cost()))
            eid += 1
        # portals: forward pairs, bound to the next level's OD pairs in order
        for j in range(portal_counts[k]):
            a = int(rng.integers(0, n_nodes - 1))
            b = int(rng.integers(a + 1, n_nodes))
            edges.append(Edge(f"L{k}e{eid}", names[a], names[b], target_od=ODRef(k + 1, j)))
            eid += 1

        if k == 0:
            od_pairs = (ODPair(names[0], names[-1], float(rng.uniform(0.5, 2.0))),)
        else:
            od_pairs = tuple(
                ODPair(names[0], names[-1]) for _ in range(portal_counts[k - 1])
            )
        levels.append(LevelGraph(tuple(names), tuple(edges), od_pairs))
        total_edges += len(edges)
        if total_edges > 20:
            return random_hierarchy(seed + 1000)  # retry smaller draw

    gammas = [float(rng.uniform(0.2, 2.0)) for _ in range(m)]
    net = NetworkHierarchy(levels=levels, gammas=gammas)
    t = [c.free_flow_time + float(rng.uniform(0.0, 0.05)) for c in net.plain_costs()]
    return net, t

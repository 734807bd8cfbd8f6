"""Network topology and pairwise-field parameters.

Nodes are 1-based integers.  An undirected edge {i, j} is stored once as the
sorted pair (min, max); message passing uses *directed* edges (k, j), meaning
"from k to j".  The pairwise field over states x in {-1,+1}^N is

    p(x) ∝ prod_j phi_j(x_j) * prod_{ij in E} exp(J_ij x_i x_j)

with no node bias (theta = 0); all per-node evidence enters through the
local statistics gamma_j at runtime, never through the field itself.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Dict, Iterable, Tuple

Edge = Tuple[int, int]


def _canon(i: int, j: int) -> Edge:
    return (i, j) if i < j else (j, i)


@dataclass(frozen=True)
class Topology:
    """Undirected simple graph on nodes 1..node_count."""

    node_count: int
    edges: Tuple[Edge, ...]

    def __post_init__(self) -> None:
        if self.node_count < 1:
            raise ValueError("node_count must be >= 1")
        seen = set()
        canon = []
        for e in self.edges:
            if len(e) != 2:
                raise ValueError(f"edge {e!r} is not a pair")
            i, j = e
            if i == j:
                raise ValueError(f"self-loop at node {i}")
            if not (1 <= i <= self.node_count and 1 <= j <= self.node_count):
                raise ValueError(f"edge {e!r} references a node outside 1..{self.node_count}")
            c = _canon(i, j)
            if c in seen:
                raise ValueError(f"duplicate edge {c!r}")
            seen.add(c)
            canon.append(c)
        object.__setattr__(self, "edges", tuple(sorted(canon)))

    @property
    def nodes(self) -> range:
        return range(1, self.node_count + 1)

    def directed_edges(self) -> Tuple[Edge, ...]:
        """Both orientations of every edge, sorted."""
        out = []
        for i, j in self.edges:
            out.append((i, j))
            out.append((j, i))
        return tuple(sorted(out))


def chain(n: int) -> Topology:
    """Path graph 1-2-...-n."""
    return Topology(n, tuple((i, i + 1) for i in range(1, n)))


def star(n: int, hub: int = 1) -> Topology:
    """Star on n nodes with the given hub."""
    if not 1 <= hub <= n:
        raise ValueError("hub outside node range")
    return Topology(n, tuple(_canon(hub, j) for j in range(1, n + 1) if j != hub))


def neighbors(top: Topology, j: int) -> Tuple[int, ...]:
    """Neighbors of j in ascending order."""
    if not 1 <= j <= top.node_count:
        raise ValueError(f"node {j} outside 1..{top.node_count}")
    out = []
    for a, b in top.edges:
        if a == j:
            out.append(b)
        elif b == j:
            out.append(a)
    return tuple(sorted(out))


def neighbors_except(top: Topology, k: int, j: int) -> Tuple[int, ...]:
    """Neighbors of k with j removed (whether or not j is adjacent to k)."""
    return tuple(n for n in neighbors(top, k) if n != j)


def hop_distance(top: Topology, i: int, j: int) -> float:
    """Shortest-path hop count; math.inf when i and j are disconnected."""
    for n in (i, j):
        if not 1 <= n <= top.node_count:
            raise ValueError(f"node {n} outside 1..{top.node_count}")
    if i == j:
        return 0.0
    adj: Dict[int, list] = {n: [] for n in top.nodes}
    for a, b in top.edges:
        adj[a].append(b)
        adj[b].append(a)
    dist = {i: 0}
    frontier = [i]
    while frontier:
        nxt = []
        for u in frontier:
            for v in adj[u]:
                if v not in dist:
                    dist[v] = dist[u] + 1
                    if v == j:
                        return float(dist[v])
                    nxt.append(v)
        frontier = nxt
    return math.inf


def max_degree(top: Topology) -> int:
    """Largest node degree; error on an edgeless graph."""
    if not top.edges:
        raise ValueError("max_degree undefined on an edgeless graph")
    deg = {n: 0 for n in top.nodes}
    for a, b in top.edges:
        deg[a] += 1
        deg[b] += 1
    return max(deg.values())


@dataclass(frozen=True)
class MrfParams:
    """Edge couplings J_ij keyed by canonical (undirected) edge.

    Every edge of the topology must carry a finite coupling; sign is free
    (negative = repulsive).  `convention` records how the scalar relates to
    the pairwise exponent: "merged" means J is the *effective* message
    coupling (exponent J/2 per orientation product), "raw" means J is the
    literal exponent of exp(J x_i x_j).  Engines consume the effective
    value via `effective_coupling`.
    """

    topology: Topology
    couplings: Dict[Edge, float] = field(default_factory=dict)
    convention: str = "merged"

    def __post_init__(self) -> None:
        if self.convention not in ("merged", "raw"):
            raise ValueError(f"unknown coupling convention {self.convention!r}")
        canon = {}
        for e, v in self.couplings.items():
            c = _canon(*e)
            if c not in self.topology.edges:
                raise ValueError(f"coupling for non-edge {e!r}")
            if c in canon:
                raise ValueError(f"coupling given twice for edge {c!r}")
            if not math.isfinite(v):
                raise ValueError(f"non-finite coupling on edge {c!r}")
            canon[c] = float(v)
        missing = set(self.topology.edges) - set(canon)
        if missing:
            raise ValueError(f"missing couplings for edges {sorted(missing)}")
        object.__setattr__(self, "couplings", canon)

    def coupling(self, k: int, j: int) -> float:
        return self.couplings[_canon(k, j)]

    def effective_coupling(self, k: int, j: int) -> float:
        """The message-domain coupling: J itself under "merged", 2J under "raw"."""
        j_val = self.coupling(k, j)
        return j_val if self.convention == "merged" else 2.0 * j_val


def uniform_params(top: Topology, j_value: float, convention: str = "merged") -> MrfParams:
    """Same coupling on every edge."""
    return MrfParams(top, {e: j_value for e in top.edges}, convention)

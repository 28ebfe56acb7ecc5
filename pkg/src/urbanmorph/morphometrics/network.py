"""
Topological neighbourhoods and connectivity characters of the street network.

Nodes and segments are integer-indexed as in :class:`~urbanmorph.ingest.StreetNetwork`.
Degrees are always full-network degrees; a k-step ego network only decides
which nodes and segments are counted.
"""

from __future__ import annotations

import heapq
import math
from collections import deque
from typing import Iterable

import networkx as nx
import numpy as np

from ..ingest import StreetNetwork

MESHEDNESS_STEPS = 5
NODE_SHORT_STEPS = 3
SEGMENT_STEPS = 3


class NetworkGraph:
    """Adjacency view of a snapped street network."""

    def __init__(self, network: StreetNetwork):
        self.network = network
        self.n_nodes = network.n_nodes
        self.n_segments = network.n_segments
        self.u = np.array([s.u for s in network.segments], dtype=int)
        self.v = np.array([s.v for s in network.segments], dtype=int)
        self.length = network.lengths()
        self.degree = network.degree.copy()
        # node -> list of (neighbour, segment)
        self.adj: list[list[tuple[int, int]]] = [[] for _ in range(self.n_nodes)]
        for k in range(self.n_segments):
            a, b = int(self.u[k]), int(self.v[k])
            self.adj[a].append((b, k))
            if a != b:
                self.adj[b].append((a, k))

    # -- neighbourhoods -------------------------------------------------

    def nodes_within(self, node: int, k: int) -> list[int]:
        """Nodes at most ``k`` hops from ``node``, including it."""
        seen = {node: 0}
        queue = deque([node])
        while queue:
            cur = queue.popleft()
            if seen[cur] == k:
                continue
            for nb, _ in self.adj[cur]:
                if nb not in seen:
                    seen[nb] = seen[cur] + 1
                    queue.append(nb)
        return sorted(seen)

    def induced_segments(self, nodes: Iterable[int]) -> list[int]:
        """Segments with both endpoints in ``nodes``."""
        inside = np.zeros(self.n_nodes, dtype=bool)
        inside[list(nodes)] = True
        return np.flatnonzero(inside[self.u] & inside[self.v]).tolist()

    def segments_within(self, segment: int, k: int) -> list[int]:
        """Segments at most ``k`` steps from ``segment`` (sharing a node is one step), inclusive."""
        seen = {segment: 0}
        queue = deque([segment])
        while queue:
            cur = queue.popleft()
            if seen[cur] == k:
                continue
            for node in {int(self.u[cur]), int(self.v[cur])}:
                for _, s in self.adj[node]:
                    if s not in seen:
                        seen[s] = seen[cur] + 1
                        queue.append(s)
        return sorted(seen)

    # -- path lengths ---------------------------------------------------

    def shortest_lengths(self, source: int, nodes: Iterable[int]) -> dict[int, float]:
        """Length-weighted shortest paths from ``source`` inside the subgraph on ``nodes``."""
        allowed = set(nodes)
        dist = {source: 0.0}
        heap = [(0.0, source)]
        done = set()
        while heap:
            d, cur = heapq.heappop(heap)
            if cur in done:
                continue
            done.add(cur)
            for nb, s in self.adj[cur]:
                if nb not in allowed or nb in done:
                    continue
                nd = d + float(self.length[s])
                if nd < dist.get(nb, math.inf):
                    dist[nb] = nd
                    heapq.heappush(heap, (nd, nb))
        return dist

    def to_networkx(self) -> nx.Graph:
        g = nx.Graph()
        g.add_nodes_from(range(self.n_nodes))
        for k in range(self.n_segments):
            a, b = int(self.u[k]), int(self.v[k])
            if a != b:
                g.add_edge(a, b)
        return g


def meshedness(graph: NetworkGraph, node: int, k: int = MESHEDNESS_STEPS) -> float:
    """(e - v + 1) / (2v - 5) over the k-step ego network; NaN when v < 3."""
    nodes = graph.nodes_within(node, k)
    v = len(nodes)
    if v < 3:
        return math.nan
    e = len(graph.induced_segments(nodes))
    return (e - v + 1) / (2 * v - 5)


def degree_proportions(graph: NetworkGraph, node: int, k: int = MESHEDNESS_STEPS) -> tuple[float, float, float]:
    """Shares of degree-1, degree-3 and degree-4 nodes in the k-step ego network."""
    deg = graph.degree[graph.nodes_within(node, k)]
    n = len(deg)
    return float(np.sum(deg == 1)) / n, float(np.sum(deg == 3)) / n, float(np.sum(deg == 4)) / n


def local_closeness(graph: NetworkGraph, node: int, k: int = MESHEDNESS_STEPS) -> float:
    """Closeness of ``node`` within its k-step ego network.

    ``r / sum(d)`` over the ``r`` other ego nodes reachable inside the ego
    network, ``d`` being length-weighted shortest paths. NaN with nothing reachable.
    """
    nodes = graph.nodes_within(node, k)
    dist = graph.shortest_lengths(node, nodes)
    others = [d for n, d in dist.items() if n != node]
    total = math.fsum(others)
    if not others or total <= 0:
        return math.nan
    return len(others) / total


def node_density(graph: NetworkGraph, node: int, k: int = MESHEDNESS_STEPS) -> tuple[float, float]:
    """Ego nodes per meter and degree-weighted ego nodes per meter."""
    nodes = graph.nodes_within(node, k)
    segs = graph.induced_segments(nodes)
    total = math.fsum(graph.length[segs])
    if total <= 0:
        return math.nan, math.nan
    weighted = float(np.sum(graph.degree[nodes] - 1))
    return len(nodes) / total, weighted / total


def culdesac_length(graph: NetworkGraph, node: int, k: int = NODE_SHORT_STEPS) -> float:
    nodes = graph.nodes_within(node, k)
    segs = np.asarray(graph.induced_segments(nodes), dtype=int)
    if not len(segs):
        return 0.0
    dead = (graph.degree[graph.u[segs]] == 1) | (graph.degree[graph.v[segs]] == 1)
    return math.fsum(graph.length[segs[dead]])


def mean_neighbour_distance(graph: NetworkGraph, node: int) -> float:
    segs = [s for _, s in graph.adj[node]]
    if not segs:
        return math.nan
    return float(np.mean(graph.length[segs]))


def node_network_metrics(graph: NetworkGraph, node: int, k: int = MESHEDNESS_STEPS) -> dict[str, float]:
    """Connectivity and intensity characters of one node over its k-step ego network."""
    pde, p3w, p4w = degree_proportions(graph, node, k)
    nde, wnd = node_density(graph, node, k)
    return {
        "lcdMes": meshedness(graph, node, k),
        "linPDE": pde,
        "linP3W": p3w,
        "linP4W": p4w,
        "linNDe": nde,
        "linWND": wnd,
        "lcnClo": local_closeness(graph, node, k),
    }


def square_clustering(graph: NetworkGraph) -> np.ndarray:
    sc = nx.square_clustering(graph.to_networkx())
    return np.array([sc[i] for i in range(graph.n_nodes)], dtype=float)

"""Weighted maxima-saddle graph, MST, diameter path, and interactive
path/branch selection.

Edge weights are |D(m) - D(s)| on the density field, so the minimum
spanning tree prefers connections with small density drops and inherently
avoids low-density regions; the maximum-total-weight simple path of the
tree (its diameter) is the automatic path proposal.
"""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field, replace

import numpy as np

from .histogram import DensityField
from .topology2d import ExtremumGraph


class PathError(ValueError):
    pass


@dataclass(frozen=True)
class GraphNode:
    id: int
    vertex: tuple[int, int]
    kind: str                # "maximum" | "saddle"
    density: float


@dataclass(frozen=True)
class WeightedEdge:
    u: int                   # node ids; for separatrix edges u is the saddle
    v: int
    weight: float
    polyline: np.ndarray     # (m, 2) grid coords oriented u -> v


@dataclass(frozen=True)
class WeightedGraph:
    nodes: list[GraphNode]
    edges: list[WeightedEdge]

    def adjacency(self) -> list[list[tuple[int, int]]]:
        """node id -> [(neighbor id, edge index)], neighbors sorted."""
        adj: list[list[tuple[int, int]]] = [[] for _ in self.nodes]
        for k, e in enumerate(self.edges):
            adj[e.u].append((e.v, k))
            adj[e.v].append((e.u, k))
        for lst in adj:
            lst.sort()
        return adj

    def total_weight(self) -> float:
        return float(sum(e.weight for e in self.edges))


@dataclass(frozen=True)
class TreePath:
    """An ordered node walk through the tree plus its separatrix geometry."""

    vertices: list[tuple[int, int]]      # grid coords of the nodes, in order
    kinds: list[str]
    densities: list[float]
    polyline: np.ndarray                 # concatenated separatrix walk
    branch_id: int = 0
    node_ids: tuple[int, ...] = field(default=(), compare=False)

    def __len__(self) -> int:
        return len(self.vertices)


def build_weighted_graph(eg: ExtremumGraph, d: DensityField) -> WeightedGraph:
    """One node per maximum/saddle of the graph, one edge per separatrix
    with weight |D(m) - D(s)|; parallel saddle-maximum edges keep the
    minimum weight (they are equal by construction)."""
    if eg.n != d.n:
        raise PathError(f"grid mismatch: graph n={eg.n}, density n={d.n}")
    nodes: list[GraphNode] = []
    index: dict[tuple[int, int], int] = {}
    for cp in list(eg.maxima) + list(eg.saddles):
        index[cp.vertex] = len(nodes)
        nodes.append(GraphNode(len(nodes), cp.vertex, cp.kind,
                               float(d.values[cp.vertex])))
    best: dict[tuple[int, int], WeightedEdge] = {}
    for e in eg.edges:
        s, m = index[e.saddle], index[e.maximum]
        w = abs(float(d.values[e.maximum]) - float(d.values[e.saddle]))
        key = (s, m)
        if key not in best or w < best[key].weight:
            best[key] = WeightedEdge(s, m, w, np.asarray(e.polyline))
    edges = [best[k] for k in sorted(best)]
    return WeightedGraph(nodes=nodes, edges=edges)


def minimum_spanning_tree(g: WeightedGraph) -> WeightedGraph:
    """Kruskal MST per connected component (a spanning forest).

    Ties break on (weight, u, v) so the result is deterministic.
    """
    if not g.nodes:
        raise PathError("empty graph")
    order = sorted(range(len(g.edges)),
                   key=lambda k: (g.edges[k].weight, g.edges[k].u, g.edges[k].v))
    parent = list(range(len(g.nodes)))

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    keep = []
    for k in order:
        e = g.edges[k]
        ra, rb = find(e.u), find(e.v)
        if ra != rb:
            parent[ra] = rb
            keep.append(k)
    keep.sort()
    return WeightedGraph(nodes=g.nodes, edges=[g.edges[k] for k in keep])


def _components(t: WeightedGraph) -> list[list[int]]:
    adj = t.adjacency()
    seen = [False] * len(t.nodes)
    comps = []
    for start in range(len(t.nodes)):
        if seen[start]:
            continue
        comp = []
        queue = deque([start])
        seen[start] = True
        while queue:
            u = queue.popleft()
            comp.append(u)
            for v, _ in adj[u]:
                if not seen[v]:
                    seen[v] = True
                    queue.append(v)
        comps.append(comp)
    return comps


def _farthest(t: WeightedGraph, adj, start: int):
    """(node, distance, parent map) for the weighted-farthest node from
    start; distance ties resolve to the smaller node id."""
    dist = {start: 0.0}
    parent = {start: -1}
    queue = deque([start])
    while queue:
        u = queue.popleft()
        for v, k in adj[u]:
            if v not in dist:
                dist[v] = dist[u] + t.edges[k].weight
                parent[v] = u
                queue.append(v)
    far = min(dist, key=lambda v: (-dist[v], v))
    return far, dist[far], parent


def _nodes_to_path(t: WeightedGraph, node_seq: list[int], branch_id: int = 0) -> TreePath:
    edge_of = {}
    for k, e in enumerate(t.edges):
        edge_of[(e.u, e.v)] = k
        edge_of[(e.v, e.u)] = k
    poly: list[tuple[int, int]] = [tuple(t.nodes[node_seq[0]].vertex)]
    for a, b in zip(node_seq, node_seq[1:]):
        k = edge_of.get((a, b))
        if k is None:
            raise PathError(f"nodes {a} and {b} are not adjacent in the tree")
        e = t.edges[k]
        seg = [tuple(p) for p in np.asarray(e.polyline).tolist()]
        if e.u != a:
            seg = seg[::-1]
        poly.extend(seg[1:])
    return TreePath(
        vertices=[t.nodes[u].vertex for u in node_seq],
        kinds=[t.nodes[u].kind for u in node_seq],
        densities=[t.nodes[u].density for u in node_seq],
        polyline=np.asarray(poly, dtype=np.int64),
        branch_id=branch_id,
        node_ids=tuple(node_seq))


def tree_diameter_path(t: WeightedGraph) -> TreePath:
    """Maximum-total-weight simple path via double sweep (exact on trees),
    taken in the forest's largest-total-weight component."""
    if not t.nodes:
        raise PathError("empty forest")
    adj = t.adjacency()
    comps = _components(t)

    def comp_weight(comp):
        ids = set(comp)
        return sum(e.weight for e in t.edges if e.u in ids)

    comps.sort(key=lambda c: (-comp_weight(c), min(c)))
    root = min(comps[0])
    a, _, _ = _farthest(t, adj, root)
    b, _, parent = _farthest(t, adj, a)
    seq = []
    u = b
    while u != -1:
        seq.append(u)
        u = parent[u]
    seq.reverse()   # runs a -> b
    return _nodes_to_path(t, seq)


def subpath_between(t: WeightedGraph, a: int, b: int) -> TreePath:
    """The unique tree path a -> b with its concatenated separatrix."""
    if not (0 <= a < len(t.nodes) and 0 <= b < len(t.nodes)):
        raise PathError(f"node id out of range: {a}, {b}")
    if a == b:
        node = t.nodes[a]
        return TreePath(vertices=[node.vertex], kinds=[node.kind],
                        densities=[node.density],
                        polyline=np.empty((0, 2), dtype=np.int64),
                        node_ids=(a,))
    adj = t.adjacency()
    parent = {a: -1}
    queue = deque([a])
    while queue:
        u = queue.popleft()
        if u == b:
            break
        for v, _ in adj[u]:
            if v not in parent:
                parent[v] = u
                queue.append(v)
    if b not in parent:
        raise PathError(f"nodes {a} and {b} are in different components")
    seq = []
    u = b
    while u != -1:
        seq.append(u)
        u = parent[u]
    seq.reverse()
    return _nodes_to_path(t, seq)


def trim_low_density(p: TreePath, d: DensityField, tau: float) -> TreePath:
    """Drop leading/trailing runs of nodes with density below tau.

    Interior nodes are never removed; trimming everything is an error.
    """
    if len(p) == 0:
        raise PathError("empty path")
    dens = [float(d.values[v]) for v in p.vertices]
    lo = 0
    while lo < len(dens) and dens[lo] < tau:
        lo += 1
    hi = len(dens)
    while hi > lo and dens[hi - 1] < tau:
        hi -= 1
    if lo >= hi:
        raise PathError(f"path fully trimmed at tau={tau}")
    if lo == 0 and hi == len(dens):
        return p
    verts = p.vertices[lo:hi]
    # cut the polyline at the new terminal node vertices
    poly = [tuple(q) for q in np.asarray(p.polyline).tolist()]
    start = poly.index(tuple(verts[0])) if poly else 0
    end = (len(poly) - 1 - poly[::-1].index(tuple(verts[-1]))) if poly else -1
    return TreePath(
        vertices=verts, kinds=p.kinds[lo:hi], densities=p.densities[lo:hi],
        polyline=np.asarray(poly[start:end + 1], dtype=np.int64),
        branch_id=p.branch_id, node_ids=p.node_ids[lo:hi])


def select_branches(t: WeightedGraph, selections: list[tuple[int, int]]) -> list[TreePath]:
    """Resolve each (a, b) node pair to its tree path; branch ids follow
    selection order and fix the offsets of the merged parameterization."""
    branches = []
    for k, (a, b) in enumerate(selections):
        p = subpath_between(t, a, b)
        branches.append(replace(p, branch_id=k))
    return branches

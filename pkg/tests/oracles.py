"""Independent brute-force oracles.

Everything here is written from first principles (triangle incidence,
set-based sweeps, exhaustive enumeration) and deliberately shares no code
with the package implementation it checks.
"""
from __future__ import annotations

import itertools
import math

import numpy as np


def key(values, v, n):
    """Tie order: (value, linear index)."""
    i, j = divmod(v, n)
    return (values[i, j], v)


def triangles(n):
    """Freudenthal triangulation: each cell split along (i,j)-(i+1,j+1)."""
    tris = []
    for i in range(n - 1):
        for j in range(n - 1):
            a = i * n + j
            b = (i + 1) * n + j
            c = (i + 1) * n + (j + 1)
            d = i * n + (j + 1)
            tris.append((a, b, c))
            tris.append((a, c, d))
    return tris


def link_edges(n):
    """vertex -> set of (u, w) link edges (opposite edges of its triangles)."""
    links = {v: set() for v in range(n * n)}
    for t in triangles(n):
        for v in t:
            others = tuple(sorted(u for u in t if u != v))
            links[v].add(others)
    return links


def adjacency(n):
    adj = {v: set() for v in range(n * n)}
    for t in triangles(n):
        for a, b in itertools.combinations(t, 2):
            adj[a].add(b)
            adj[b].add(a)
    return adj


def naive_classify(values):
    """Per-vertex lower-link component counting via explicit triangle links.

    Returns dict vertex (i, j) -> kind for all non-regular vertices.
    """
    n = values.shape[0]
    links = link_edges(n)
    adj = adjacency(n)
    out = {}
    for v in range(n * n):
        kv = key(values, v, n)
        lower = {u for u in adj[v] if key(values, u, n) < kv}
        if not lower:
            out[divmod(v, n)] = "minimum"
            continue
        if lower == adj[v]:
            out[divmod(v, n)] = "maximum"
            continue
        # count connected components of the lower link
        edges = [e for e in links[v] if e[0] in lower and e[1] in lower]
        parent = {u: u for u in lower}

        def find(x):
            while parent[x] != x:
                parent[x] = parent[parent[x]]
                x = parent[x]
            return x

        for a, b in edges:
            parent[find(a)] = find(b)
        comps = len({find(u) for u in lower})
        if comps >= 2:
            out[divmod(v, n)] = "saddle"
    return out


def naive_persistence_pairs(values):
    """Superlevel-set sweep with explicit component sets.

    Returns a set of (creator vertex, destroyer vertex, persistence).
    """
    n = values.shape[0]
    adj = adjacency(n)
    order = sorted(range(n * n), key=lambda v: key(values, v, n), reverse=True)
    comps = []   # list of (vertex set, max vertex)
    pairs = set()
    for v in order:
        touching = [c for c in comps if adj[v] & c[0]]
        if not touching:
            comps.append(({v}, v))
            continue
        winner = max(touching, key=lambda c: key(values, c[1], n))
        merged = {v}
        for c in touching:
            if c is not winner:
                mi, mj = divmod(c[1], n)
                si, sj = divmod(v, n)
                pairs.add(((mi, mj), (si, sj),
                           values[mi, mj] - values[si, sj]))
            merged |= c[0]
            comps.remove(c)
        comps.append((merged | winner[0], winner[1]))
    return pairs


def exhaustive_nearest(points, q):
    """(index, distance) of the nearest sample; ties take the smaller index."""
    d2 = (points[:, 0] - q[0]) ** 2 + (points[:, 1] - q[1]) ** 2
    i = int(np.argmin(d2))   # argmin returns the first (smallest-index) minimum
    return i, math.sqrt(d2[i])


def spanning_tree_min_weight(n_nodes, edges):
    """Minimum spanning tree weight by enumerating all edge subsets.

    ``edges`` is [(u, v, w)]; the graph must be connected.
    """
    best = None
    for subset in itertools.combinations(range(len(edges)), n_nodes - 1):
        parent = list(range(n_nodes))

        def find(x):
            while parent[x] != x:
                parent[x] = parent[parent[x]]
                x = parent[x]
            return x

        ok = True
        for k in subset:
            u, v, _ = edges[k]
            ru, rv = find(u), find(v)
            if ru == rv:
                ok = False
                break
            parent[ru] = rv
        if not ok or len({find(x) for x in range(n_nodes)}) != 1:
            continue
        w = sum(edges[k][2] for k in subset)
        if best is None or w < best:
            best = w
    return best


def all_pairs_max_path(n_nodes, edges):
    """(weight, (a, b)) of the maximum-total-weight simple path in a tree."""
    adj = {u: [] for u in range(n_nodes)}
    for u, v, w in edges:
        adj[u].append((v, w))
        adj[v].append((u, w))

    def path_weight(a, b):
        stack = [(a, -1, 0.0)]
        while stack:
            u, prev, acc = stack.pop()
            if u == b:
                return acc
            for v, w in adj[u]:
                if v != prev:
                    stack.append((v, u, acc + w))
        return None

    best = (-1.0, (0, 0))
    for a in range(n_nodes):
        for b in range(n_nodes):
            w = path_weight(a, b)
            if w is not None and w > best[0]:
                best = (w, (a, b))
    return best


def quadratic_peaks(weights, min_persistence):
    """1D peak count: local maxima under the (weight, index) tie order with
    persistence = height minus the higher of the two stretch-minimum valleys
    toward the nearest higher bin on each side."""
    w = list(weights)
    m = len(w)

    def higher(a, b):
        return (w[a], a) > (w[b], b)

    peaks = []
    for b in range(m):
        if b > 0 and higher(b - 1, b):
            continue
        if b + 1 < m and higher(b + 1, b):
            continue
        levels = []
        for step in (-1, 1):
            valley = None
            x = b + step
            while 0 <= x < m:
                valley = w[x] if valley is None else min(valley, w[x])
                if higher(x, b):
                    levels.append(valley)
                    break
                x += step
        if not levels:
            persistence = math.inf
        else:
            persistence = w[b] - max(levels)
        peaks.append((b, persistence))
    thr = min_persistence * max(w)
    return sum(1 for _, p in peaks if p == math.inf or p >= thr)

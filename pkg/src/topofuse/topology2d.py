"""Discrete scalar-field topology on an n x n grid.

The grid is triangulated with a fixed diagonal per quad (lower-left to
upper-right), giving every interior vertex the 6-neighborhood
E, NE, N, W, SW, S whose link is a 6-cycle; boundary vertices get the
naturally truncated path link.  Degeneracies are removed symbolically by a
strict total order on vertices: compare by value, then by linear index
``i*n + j`` (simulation of simplicity).  All comparisons below happen on
integer ranks derived from that order, never on raw floats.

Vertex classification counts connected components of the lower link:
0 -> minimum, full -> maximum, 1 -> regular, 2 -> saddle, 3 -> multi-saddle
(split symbolically).  Persistence pairs come from the superlevel-set merge
sweep; simplification flattens dying basins just below their paired saddle
so downstream stages see a plain field.
"""
from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass
from functools import cached_property

import numpy as np

# cyclic neighbor slots; consecutive slots are adjacent in the vertex link
_OFFS = ((1, 0), (1, 1), (0, 1), (-1, 0), (-1, -1), (0, -1))  # E NE N W SW S


class TopologyError(ValueError):
    pass


@dataclass(frozen=True)
class GridField:
    """Square scalar field with the (value, linear index) tie order."""

    values: np.ndarray       # (n, n) float64, vertex (i, j) at linear index i*n + j

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        if values.ndim != 2 or values.shape[0] != values.shape[1]:
            raise TopologyError(f"field must be square, got shape {values.shape}")
        if not np.all(np.isfinite(values)):
            raise TopologyError("field contains non-finite values")
        values = values.copy()
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @cached_property
    def order(self) -> np.ndarray:
        """Vertex ids sorted ascending under the tie order."""
        flat = self.values.ravel()
        return np.lexsort((np.arange(flat.size), flat))

    @cached_property
    def ranks(self) -> np.ndarray:
        """Flat array: rank of each vertex under the tie order (0 = lowest)."""
        ranks = np.empty(self.order.size, dtype=np.int64)
        ranks[self.order] = np.arange(self.order.size)
        return ranks


@dataclass(frozen=True)
class CriticalPoint:
    vertex: tuple[int, int]
    kind: str                # "minimum" | "saddle" | "maximum"
    value: float


@dataclass(frozen=True)
class PersistencePair:
    creator: CriticalPoint   # maximum
    destroyer: CriticalPoint  # saddle
    persistence: float


@dataclass(frozen=True)
class GraphEdge:
    saddle: tuple[int, int]
    maximum: tuple[int, int]
    polyline: np.ndarray     # (m, 2) int64, strictly ascending saddle -> maximum
    collapsed: bool = False  # true when both traces from the saddle met this maximum


@dataclass(frozen=True)
class ExtremumGraph:
    n: int
    maxima: list[CriticalPoint]
    saddles: list[CriticalPoint]
    edges: list[GraphEdge]


def _neighbor_ranks(ranks2d: np.ndarray) -> np.ndarray:
    """(6, n, n) stack of neighbor ranks in slot order, -1 where missing."""
    n = ranks2d.shape[0]
    padded = np.full((n + 2, n + 2), -1, dtype=np.int64)
    padded[1:-1, 1:-1] = ranks2d
    return np.stack([padded[1 + di:1 + di + n, 1 + dj:1 + dj + n]
                     for di, dj in _OFFS])


def _classify_arrays(field: GridField):
    """Per-vertex masks: is_min, is_max, lower-link component count."""
    n = field.n
    ranks2d = field.ranks.reshape(n, n)
    nbr = _neighbor_ranks(ranks2d)
    present = nbr >= 0
    lower = present & (nbr < ranks2d[None])
    n_lower = lower.sum(axis=0)
    n_present = present.sum(axis=0)
    # components of the lower link = number of 1 -> 0 transitions around the
    # cyclic slot order (missing slots count as 0, which reproduces the
    # truncated path link on the boundary)
    trans = (lower & ~np.roll(lower, -1, axis=0)).sum(axis=0)
    is_min = n_lower == 0
    is_max = n_lower == n_present
    return is_min, is_max, trans, nbr, present


def classify_critical_points(field: GridField) -> list[CriticalPoint]:
    """Classify every vertex; regular vertices are omitted.

    Multi-saddles (3 lower-link components) appear once with kind
    ``"saddle"``; the symbolic split shows up as multiple persistence pairs
    and separatrices at that vertex.
    """
    if field.n < 3:
        raise TopologyError(f"grid too small for classification: n={field.n}")
    is_min, is_max, trans, _, _ = _classify_arrays(field)
    out = []
    n = field.n
    vals = field.values
    for i, j in zip(*np.nonzero(is_min)):
        out.append(CriticalPoint((int(i), int(j)), "minimum", float(vals[i, j])))
    saddle_mask = ~is_min & ~is_max & (trans >= 2)
    for i, j in zip(*np.nonzero(saddle_mask)):
        out.append(CriticalPoint((int(i), int(j)), "saddle", float(vals[i, j])))
    for i, j in zip(*np.nonzero(is_max)):
        out.append(CriticalPoint((int(i), int(j)), "maximum", float(vals[i, j])))
    out.sort(key=lambda cp: (cp.vertex[0], cp.vertex[1]))
    return out


def _iter_neighbors(v: int, n: int):
    i, j = divmod(v, n)
    if i + 1 < n:
        yield v + n
        if j + 1 < n:
            yield v + n + 1
    if j + 1 < n:
        yield v + 1
    if i > 0:
        yield v - n
        if j > 0:
            yield v - n - 1
    if j > 0:
        yield v - 1


def _merge_sweep(field: GridField, on_merge):
    """Process vertices in decreasing tie order with a union-find over the
    superlevel set.  ``on_merge(dying_max, saddle, survivor_root)`` is called
    once per dying component; it may return member bookkeeping via closure.
    Returns nothing; all effects go through the callback.
    """
    n = field.n
    ranks = field.ranks.tolist()
    order_desc = field.order[::-1].tolist()
    parent = list(range(n * n))
    comp_max = [-1] * (n * n)

    for v in order_desc:
        rv = ranks[v]
        roots = []
        i, j = divmod(v, n)
        # inline neighbor enumeration, hot loop
        if i + 1 < n:
            u = v + n
            if ranks[u] > rv:
                roots.append(u)
            if j + 1 < n:
                u = v + n + 1
                if ranks[u] > rv:
                    roots.append(u)
        if j + 1 < n:
            u = v + 1
            if ranks[u] > rv:
                roots.append(u)
        if i > 0:
            u = v - n
            if ranks[u] > rv:
                roots.append(u)
            if j > 0:
                u = v - n - 1
                if ranks[u] > rv:
                    roots.append(u)
        if j > 0:
            u = v - 1
            if ranks[u] > rv:
                roots.append(u)

        if not roots:
            comp_max[v] = v
            continue
        # resolve to distinct roots (path halving)
        distinct = []
        for u in roots:
            r = u
            while parent[r] != r:
                parent[r] = parent[parent[r]]
                r = parent[r]
            if r not in distinct:
                distinct.append(r)
        best = distinct[0]
        for r in distinct[1:]:
            if ranks[comp_max[r]] > ranks[comp_max[best]]:
                best = r
        for r in distinct:
            if r != best:
                on_merge(comp_max[r], v, best, r)
                parent[r] = best
        parent[v] = best


def compute_persistence_pairs(field: GridField) -> list[PersistencePair]:
    """Maximum-saddle pairs of the superlevel-set merge tree.

    When a saddle joins components, each component whose maximum is lower
    under the tie order dies and pairs with that saddle; the global maximum
    stays unpaired.  Pairs are returned in sweep (merge-event) order.
    """
    n = field.n
    vals = field.values.ravel()
    pairs: list[PersistencePair] = []

    def on_merge(dying_max, saddle, survivor, dying_root):
        mi, mj = divmod(dying_max, n)
        si, sj = divmod(saddle, n)
        creator = CriticalPoint((mi, mj), "maximum", float(vals[dying_max]))
        destroyer = CriticalPoint((si, sj), "saddle", float(vals[saddle]))
        pairs.append(PersistencePair(creator, destroyer,
                                     float(vals[dying_max] - vals[saddle])))

    _merge_sweep(field, on_merge)
    return pairs


def _flatten_basin(work: list, members: list[int], saddle: int, n: int) -> None:
    """Lower a dying basin just below its saddle: BFS order from the saddle,
    each vertex one float step below the previous, so the flattened region
    descends monotonically away from the saddle and creates no new maxima."""
    member_set = set(members)
    visited = set()
    queue = deque()
    for u in sorted(set(_iter_neighbors(saddle, n)) & member_set):
        queue.append(u)
        visited.add(u)
    val = work[saddle]
    while queue:
        u = queue.popleft()
        val = math.nextafter(val, -math.inf)
        work[u] = val
        for w in sorted(set(_iter_neighbors(u, n)) & member_set - visited):
            queue.append(w)
            visited.add(w)
    if len(visited) != len(member_set):   # must be connected through the saddle
        raise TopologyError("basin flattening failed to reach all members")


def _flatten_sweep(field: GridField, threshold: float):
    """One cancellation pass: merge sweep that flattens every dying basin
    whose persistence falls below threshold * (value range).  Returns
    (new flat values as list, any_change)."""
    n = field.n
    vals = field.values.ravel()
    thr_abs = threshold * float(vals.max() - vals.min())
    work = vals.tolist()
    members: dict[int, list[int]] = {}
    changed = False

    def on_merge(dying_max, saddle, survivor, dying_root):
        nonlocal changed
        mem = members.pop(dying_root, None)
        if mem is None:
            mem = [dying_root]
        if float(vals[dying_max] - vals[saddle]) < thr_abs:
            _flatten_basin(work, mem, saddle, n)
            changed = True
        surv = members.get(survivor)
        if surv is None:
            surv = [survivor]
            members[survivor] = surv
        if len(mem) > len(surv):
            mem.extend(surv)
            members[survivor] = mem
        else:
            surv.extend(mem)

    # wrap the basic sweep but also track every vertex into its root's members
    ranks = field.ranks.tolist()
    order_desc = field.order[::-1].tolist()
    parent = list(range(n * n))
    comp_max = [-1] * (n * n)
    for v in order_desc:
        rv = ranks[v]
        roots = []
        for u in _iter_neighbors(v, n):
            if ranks[u] > rv:
                r = u
                while parent[r] != r:
                    parent[r] = parent[parent[r]]
                    r = parent[r]
                if r not in roots:
                    roots.append(r)
        if not roots:
            comp_max[v] = v
            members[v] = [v]
            continue
        best = roots[0]
        for r in roots[1:]:
            if ranks[comp_max[r]] > ranks[comp_max[best]]:
                best = r
        for r in roots:
            if r != best:
                on_merge(comp_max[r], v, best, r)
                parent[r] = best
        parent[v] = best
        members[best].append(v)
    return work, changed


def simplify(field: GridField, pairs: list[PersistencePair] | None,
             threshold: float) -> GridField:
    """Cancel all pairs with persistence < threshold * (global value range).

    Dying basins are flattened to just below their paired saddle, preserving
    tie-order consistency; the pass repeats until the output has no finite
    pair under the threshold (flattening near exact float boundaries can in
    principle expose a follow-up pair).  threshold 0 returns the field
    unchanged.
    """
    if threshold < 0:
        raise TopologyError(f"threshold must be >= 0, got {threshold}")
    if threshold == 0:
        return field
    if pairs is not None:
        rng = float(field.values.max() - field.values.min())
        if all(p.persistence >= threshold * rng for p in pairs):
            return field
    current = field
    for _ in range(64):
        work, changed = _flatten_sweep(current, threshold)
        if not changed:
            return current
        current = GridField(np.asarray(work, dtype=np.float64).reshape(field.n, field.n))
    raise TopologyError("persistence simplification did not converge")


def _upper_components(up: np.ndarray) -> list[list[int]]:
    """Runs of upper-link slots in cyclic order (missing slots break runs)."""
    comps = []
    for s in range(6):
        if up[s] and not up[(s - 1) % 6]:
            comp = [s]
            t = (s + 1) % 6
            while up[t]:
                comp.append(t)
                t = (t + 1) % 6
            comps.append(comp)
    if not comps and up.all():
        comps.append(list(range(6)))
    return comps


def _graph_from_ranks(values: np.ndarray, ranks_flat: np.ndarray) -> ExtremumGraph:
    n = values.shape[0]
    ranks2d = ranks_flat.reshape(n, n)
    nbr = _neighbor_ranks(ranks2d)
    present = nbr >= 0
    lower = present & (nbr < ranks2d[None])
    n_lower = lower.sum(axis=0)
    n_present = present.sum(axis=0)
    trans = (lower & ~np.roll(lower, -1, axis=0)).sum(axis=0)
    is_max = n_lower == n_present
    is_min = n_lower == 0
    saddle_mask = ~is_min & ~is_max & (trans >= 2)

    # steepest-ascent pointer: highest-ranked neighbor, self when none higher
    off_lin = np.array([di * n + dj for di, dj in _OFFS], dtype=np.int64)
    best_slot = nbr.argmax(axis=0)
    best_rank = np.take_along_axis(nbr, best_slot[None], axis=0)[0]
    flat_ids = np.arange(n * n, dtype=np.int64).reshape(n, n)
    pointer = np.where(best_rank > ranks2d,
                       flat_ids + off_lin[best_slot], flat_ids).ravel()
    pointer_l = pointer.tolist()

    upper = present & (nbr > ranks2d[None])
    saddle_ids = np.sort(flat_ids[saddle_mask]).tolist()
    edges: list[GraphEdge] = []
    seen: dict[tuple[int, int], int] = {}
    for v in saddle_ids:
        i, j = divmod(v, n)
        up = upper[:, i, j]
        for comp in _upper_components(up):
            start = max(comp, key=lambda s: nbr[s, i, j])
            u = v + int(off_lin[start])
            walk = [v, u]
            while pointer_l[u] != u:
                u = pointer_l[u]
                walk.append(u)
            key = (v, u)
            if key in seen:
                k = seen[key]
                edges[k] = GraphEdge(edges[k].saddle, edges[k].maximum,
                                     edges[k].polyline, collapsed=True)
                continue
            poly = np.column_stack(divmod(np.asarray(walk, dtype=np.int64), n))
            seen[key] = len(edges)
            edges.append(GraphEdge((i, j), (u // n, u % n), poly, collapsed=False))

    maxima = [CriticalPoint((int(i), int(j)), "maximum", float(values[i, j]))
              for i, j in zip(*np.nonzero(is_max))]
    saddles = [CriticalPoint((v // n, v % n), "saddle", float(values[v // n, v % n]))
               for v in saddle_ids]
    return ExtremumGraph(n=n, maxima=maxima, saddles=saddles, edges=edges)


def extract_extremum_graph(field: GridField) -> ExtremumGraph:
    """Maxima, saddles, and ascending separatrices.

    From every saddle, one strictly ascending steepest-neighbor walk starts
    in each upper-link component and ends at a maximum.  Both walks of a
    simple saddle reaching the same maximum collapse into one flagged edge.
    Deterministic: identical fields give byte-identical graphs.
    """
    if field.n < 3:
        raise TopologyError(f"grid too small for graph extraction: n={field.n}")
    return _graph_from_ranks(field.values, field.ranks)


def extract_extremum_graph_negated(field: GridField) -> ExtremumGraph:
    """Extract the graph by negating, running the minimum-graph machinery,
    and negating back.  Exists to demonstrate the pipeline does not depend
    on the orientation workaround: for tie-free fields the result equals
    :func:`extract_extremum_graph` exactly.
    """
    neg = -field.values
    flat = neg.ravel()
    # tie order of the negated field mirrors the original exactly
    order = np.lexsort((np.arange(flat.size)[::-1], flat))
    ranks = np.empty(flat.size, dtype=np.int64)
    ranks[order] = np.arange(flat.size)
    mirrored = flat.size - 1 - ranks  # minima machinery = maxima of mirrored ranks
    return _graph_from_ranks(field.values, mirrored)

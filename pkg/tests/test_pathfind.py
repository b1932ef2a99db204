import numpy as np
import pytest

import oracles
from topofuse.histogram import DensityField, Histogram2D
from topofuse.pathfind import (GraphNode, PathError, TreePath, WeightedEdge,
                               WeightedGraph, build_weighted_graph,
                               minimum_spanning_tree, select_branches,
                               subpath_between, tree_diameter_path,
                               trim_low_density)
from topofuse.synth import GaussianSpec, generate_bump_field
from topofuse.topology2d import extract_extremum_graph


def make_graph(n_nodes, edge_list, densities=None):
    """edge_list: [(u, v, w)]; nodes get dummy grid coords."""
    if densities is None:
        densities = [0.5] * n_nodes
    nodes = [GraphNode(i, (i, 0), "maximum" if i % 2 == 0 else "saddle", densities[i])
             for i in range(n_nodes)]
    edges = [WeightedEdge(u, v, w, np.array([[u, 0], [v, 0]], dtype=np.int64))
             for u, v, w in edge_list]
    return WeightedGraph(nodes=nodes, edges=edges)


def random_connected_graph(rng, n_nodes, extra_edges):
    edges = set()
    for v in range(1, n_nodes):
        u = int(rng.integers(0, v))
        edges.add((u, v))
    target = min(n_nodes - 1 + extra_edges, n_nodes * (n_nodes - 1) // 2)
    while len(edges) < target:
        u, v = sorted(rng.integers(0, n_nodes, size=2).tolist())
        if u != v:
            edges.add((u, v))
    return [(u, v, float(np.round(rng.random(), 6))) for u, v in sorted(edges)]


def random_tree(rng, n_nodes):
    return [(int(rng.integers(0, v)), v, float(np.round(rng.random(), 6)))
            for v in range(1, n_nodes)]


class TestBuildWeightedGraph:
    def density_and_graph(self):
        field = generate_bump_field(
            [GaussianSpec((0.3, 0.48), 0.07, 1.0),
             GaussianSpec((0.7, 0.52), 0.07, 0.8)], 48)
        eg = extract_extremum_graph(field)
        h = Histogram2D(n=48, counts=np.ones((48, 48), dtype=np.int64),
                        axis_ranges=((0, 1), (0, 1)))
        d = DensityField(n=48, values=field.values, source=h)
        return eg, d

    def test_weights_are_density_drops(self):
        eg, d = self.density_and_graph()
        g = build_weighted_graph(eg, d)
        by_vertex = {node.vertex: node for node in g.nodes}
        for e in g.edges:
            s = g.nodes[e.u]
            m = g.nodes[e.v]
            assert s.kind == "saddle" and m.kind == "maximum"
            assert e.weight == abs(d.values[m.vertex] - d.values[s.vertex])
            assert e.weight >= 0
        assert by_vertex  # nodes indexed by grid vertex

    def test_arithmetic_examples(self):
        # w = |D(m) - D(s)| straight from the definition
        assert abs(0.9 - 0.6) == pytest.approx(0.3)
        eg, d = self.density_and_graph()
        g = build_weighted_graph(eg, d)
        zero_edges = [e for e in g.edges
                      if d.values[g.nodes[e.u].vertex] == d.values[g.nodes[e.v].vertex]]
        for e in zero_edges:
            assert e.weight == 0.0

    def test_grid_mismatch(self):
        eg, _ = self.density_and_graph()
        h = Histogram2D(n=24, counts=np.ones((24, 24), dtype=np.int64),
                        axis_ranges=((0, 1), (0, 1)))
        d = DensityField(n=24, values=np.zeros((24, 24)), source=h)
        with pytest.raises(PathError, match="mismatch"):
            build_weighted_graph(eg, d)


class TestMST:
    def test_triangle_takes_two_lightest(self):
        g = make_graph(3, [(0, 1, 1.0), (1, 2, 2.0), (0, 2, 3.0)])
        mst = minimum_spanning_tree(g)
        assert sorted(e.weight for e in mst.edges) == [1.0, 2.0]

    def test_tree_input_unchanged(self):
        g = make_graph(5, [(0, 1, 0.3), (1, 2, 0.1), (1, 3, 0.9), (3, 4, 0.2)])
        mst = minimum_spanning_tree(g)
        assert [(e.u, e.v, e.weight) for e in mst.edges] == \
               [(e.u, e.v, e.weight) for e in g.edges]

    def test_matches_exhaustive_minimum(self):
        rng = np.random.default_rng(42)
        for trial in range(30):
            n_nodes = int(rng.integers(3, 9))
            edges = random_connected_graph(rng, n_nodes, int(rng.integers(0, 4)))
            g = make_graph(n_nodes, edges)
            mst = minimum_spanning_tree(g)
            got = sum(e.weight for e in mst.edges)
            assert got == pytest.approx(
                oracles.spanning_tree_min_weight(n_nodes, edges), abs=1e-9)

    def test_forest_on_disconnected_input(self):
        g = make_graph(4, [(0, 1, 0.5), (2, 3, 0.25)])
        mst = minimum_spanning_tree(g)
        assert len(mst.edges) == 2


class TestDiameter:
    def test_path_graph(self):
        g = make_graph(3, [(0, 1, 1.0), (1, 2, 1.0)])
        p = tree_diameter_path(g)
        assert p.node_ids in ((0, 1, 2), (2, 1, 0))

    def test_star_takes_two_heaviest_arms(self):
        g = make_graph(4, [(0, 1, 5.0), (0, 2, 3.0), (0, 3, 2.0)])
        p = tree_diameter_path(g)
        assert set(p.node_ids) == {1, 0, 2}
        assert p.node_ids[1] == 0

    def test_matches_all_pairs_enumeration(self):
        rng = np.random.default_rng(7)
        for trial in range(30):
            n_nodes = int(rng.integers(3, 13))
            edges = random_tree(rng, n_nodes)
            g = make_graph(n_nodes, edges)
            p = tree_diameter_path(g)
            got = 0.0
            lookup = {(u, v): w for u, v, w in edges} | {(v, u): w for u, v, w in edges}
            for a, b in zip(p.node_ids, p.node_ids[1:]):
                got += lookup[(a, b)]
            best, _ = oracles.all_pairs_max_path(n_nodes, edges)
            assert got == pytest.approx(best, abs=1e-9)

    def test_largest_weight_component_selected(self):
        g = make_graph(5, [(0, 1, 0.1), (2, 3, 5.0), (3, 4, 5.0)])
        p = tree_diameter_path(g)
        assert set(p.node_ids) == {2, 3, 4}

    def test_beats_random_sampled_paths(self):
        rng = np.random.default_rng(3)
        edges = random_tree(rng, 14)
        g = make_graph(14, edges)
        diameter = tree_diameter_path(g)
        lookup = {(u, v): w for u, v, w in edges} | {(v, u): w for u, v, w in edges}
        dw = sum(lookup[(a, b)] for a, b in zip(diameter.node_ids, diameter.node_ids[1:]))
        for _ in range(50):
            a, b = rng.integers(0, 14, size=2).tolist()
            p = subpath_between(g, int(a), int(b))
            w = sum(lookup[(x, y)] for x, y in zip(p.node_ids, p.node_ids[1:]))
            assert w <= dw + 1e-12


class TestSubpath:
    def test_degenerate_single_node(self):
        g = make_graph(3, [(0, 1, 1.0), (1, 2, 1.0)])
        p = subpath_between(g, 1, 1)
        assert p.node_ids == (1,)
        assert len(p.polyline) == 0

    def test_diameter_endpoints_reproduce_diameter(self):
        rng = np.random.default_rng(11)
        edges = random_tree(rng, 10)
        g = make_graph(10, edges)
        d = tree_diameter_path(g)
        p = subpath_between(g, d.node_ids[0], d.node_ids[-1])
        assert p.node_ids == d.node_ids

    def test_matches_dfs_oracle(self):
        rng = np.random.default_rng(13)
        for trial in range(20):
            n_nodes = int(rng.integers(3, 12))
            edges = random_tree(rng, n_nodes)
            g = make_graph(n_nodes, edges)
            a, b = rng.integers(0, n_nodes, size=2).tolist()

            # DFS oracle for the unique tree path
            adj = {u: [] for u in range(n_nodes)}
            for u, v, _ in edges:
                adj[u].append(v)
                adj[v].append(u)

            def dfs(u, target, seen):
                if u == target:
                    return [u]
                seen.add(u)
                for v in adj[u]:
                    if v not in seen:
                        rest = dfs(v, target, seen)
                        if rest:
                            return [u] + rest
                return None

            expected = dfs(int(a), int(b), set())
            assert list(subpath_between(g, int(a), int(b)).node_ids) == expected

    def test_disconnected_endpoints(self):
        g = make_graph(4, [(0, 1, 1.0), (2, 3, 1.0)])
        with pytest.raises(PathError, match="different components"):
            subpath_between(g, 0, 3)


class TestTrim:
    def make_path(self, densities):
        verts = [(i, 0) for i in range(len(densities))]
        poly = np.array(verts, dtype=np.int64)
        return TreePath(vertices=verts, kinds=["maximum"] * len(densities),
                        densities=list(densities), polyline=poly,
                        node_ids=tuple(range(len(densities))))

    def field_with(self, densities):
        n = max(8, len(densities))
        vals = np.zeros((n, n))
        for i, d in enumerate(densities):
            vals[i, 0] = d
        h = Histogram2D(n=n, counts=np.ones((n, n), dtype=np.int64),
                        axis_ranges=((0, 1), (0, 1)))
        return DensityField(n=n, values=vals, source=h)

    def test_tau_zero_unchanged(self):
        p = self.make_path([0.2, 0.9, 0.1])
        d = self.field_with([0.2, 0.9, 0.1])
        assert trim_low_density(p, d, 0.0) is p

    def test_endpoint_runs_removed(self):
        dens = [0.05, 0.6, 0.7, 0.02]
        p = self.make_path(dens)
        d = self.field_with(dens)
        out = trim_low_density(p, d, 0.1)
        assert out.densities == [0.6, 0.7]
        assert out.vertices == [(1, 0), (2, 0)]
        assert np.array_equal(out.polyline, [[1, 0], [2, 0]])

    def test_interior_never_removed(self):
        dens = [0.5, 0.01, 0.5]
        p = self.make_path(dens)
        d = self.field_with(dens)
        out = trim_low_density(p, d, 0.1)
        assert out.densities == dens

    def test_fully_trimmed_is_error(self):
        p = self.make_path([0.3, 0.5])
        d = self.field_with([0.3, 0.5])
        with pytest.raises(PathError, match="fully trimmed"):
            trim_low_density(p, d, 1.0)

    def test_idempotent(self):
        dens = [0.05, 0.6, 0.02, 0.7, 0.01]
        p = self.make_path(dens)
        d = self.field_with(dens)
        once = trim_low_density(p, d, 0.1)
        twice = trim_low_density(once, d, 0.1)
        assert twice.vertices == once.vertices


class TestSelectBranches:
    def tree(self):
        #     0 - 1 - 2
        #         |
        #         3
        return make_graph(4, [(0, 1, 1.0), (1, 2, 1.0), (1, 3, 1.0)])

    def test_single_selection(self):
        (b,) = select_branches(self.tree(), [(0, 2)])
        assert b.branch_id == 0
        assert b.node_ids == (0, 1, 2)

    def test_shared_junction_appears_in_both(self):
        b0, b1 = select_branches(self.tree(), [(0, 2), (0, 3)])
        assert (b0.branch_id, b1.branch_id) == (0, 1)
        assert 1 in b0.node_ids and 1 in b1.node_ids

    def test_swapped_order_swaps_ids_only(self):
        a = select_branches(self.tree(), [(0, 2), (0, 3)])
        b = select_branches(self.tree(), [(0, 3), (0, 2)])
        assert a[0].node_ids == b[1].node_ids
        assert a[1].node_ids == b[0].node_ids
        assert [p.branch_id for p in a] == [0, 1]
        assert [p.branch_id for p in b] == [0, 1]

    def test_disconnected_selection(self):
        g = make_graph(4, [(0, 1, 1.0), (2, 3, 1.0)])
        with pytest.raises(PathError):
            select_branches(g, [(0, 3)])

import numpy as np
import pytest

from topofuse.fusion import axis_projection_histogram, count_peaks
from topofuse.histogram import compute_joint_histogram, log_normalize
from topofuse.synth import (GaussianSpec, SynthError, generate_bump_field,
                            generate_circular_gaussians)
from topofuse.topology2d import (GridField, classify_critical_points,
                                 compute_persistence_pairs)


def persistent_maxima(field, floor):
    """Maxima whose persistence clears floor * (value range); the global
    maximum always counts."""
    pairs = compute_persistence_pairs(field)
    rng = float(field.values.max() - field.values.min())
    weak = {p.creator.vertex for p in pairs if p.persistence < floor * rng}
    return [cp for cp in classify_critical_points(field)
            if cp.kind == "maximum" and cp.vertex not in weak]


class TestCircularGaussians:
    def test_seed_determinism(self):
        a1, b1 = generate_circular_gaussians(k=4, voxels_per_blob=5000, seed=9)
        a2, b2 = generate_circular_gaussians(k=4, voxels_per_blob=5000, seed=9)
        assert np.array_equal(a1.values, a2.values)
        assert np.array_equal(b1.values, b2.values)
        a3, _ = generate_circular_gaussians(k=4, voxels_per_blob=5000, seed=10)
        assert not np.array_equal(a1.values, a3.values)

    def test_blob_count_in_histogram(self):
        v1, v2 = generate_circular_gaussians(k=8, voxels_per_blob=120_000, seed=42)
        h = compute_joint_histogram(v1, v2, n=256)
        d = log_normalize(h)
        # blob pairs persist around 0.4-0.46; sampling noise stays below 0.25
        maxima = persistent_maxima(GridField(d.values), floor=0.35)
        assert len(maxima) == 8

    def test_k2_antipodal(self):
        v1, v2 = generate_circular_gaussians(k=2, voxels_per_blob=60_000, seed=3)
        h = compute_joint_histogram(v1, v2, n=128)
        d = log_normalize(h)
        field = GridField(d.values)
        maxima = persistent_maxima(field, floor=0.2)
        assert len(maxima) == 2
        # the MST diameter connects both blob cores
        import topofuse as tf
        g = tf.extract_extremum_graph(field)
        wg = tf.build_weighted_graph(g, d)
        mst = tf.minimum_spanning_tree(wg)
        path = tf.tree_diameter_path(mst)
        (lo1, hi1), _ = h.axis_ranges
        n = h.n
        centers = [((0.8 - lo1) / (hi1 - lo1) * n, 64), ((0.2 - lo1) / (hi1 - lo1) * n, 64)]
        sigma_bins = 0.048 / (hi1 - lo1) * n
        verts = np.asarray(path.vertices, dtype=float)
        for cx, cy in centers:
            dist = np.hypot(verts[:, 0] - cx, verts[:, 1] - cy)
            assert dist.min() < 1.5 * sigma_bins

    def test_axis_projections_show_three_peaks(self):
        v1, v2 = generate_circular_gaussians(k=8, voxels_per_blob=120_000, seed=42)
        h = compute_joint_histogram(v1, v2, n=256)
        for axis in (1, 2):
            count, _ = count_peaks(axis_projection_histogram(h, axis), 0.05)
            assert count == 3

    def test_overlapping_sigma_warns(self):
        with pytest.warns(UserWarning, match="blobs"):
            generate_circular_gaussians(k=8, radius=0.2, sigma=0.09,
                                        voxels_per_blob=1000)

    def test_k_too_small(self):
        with pytest.raises(SynthError):
            generate_circular_gaussians(k=1)

    def test_values_within_declared_range(self):
        v1, v2 = generate_circular_gaussians(k=3, voxels_per_blob=4000, seed=5)
        assert v1.value_range == (0.0, 1.0)
        assert 0 <= v1.values.min() and v1.values.max() <= 1
        assert 0 <= v2.values.min() and v2.values.max() <= 1


class TestBumpField:
    def test_single_spec_single_maximum(self):
        field = generate_bump_field([GaussianSpec((0.4, 0.6), 0.1, 1.0)], 48)
        maxima = [c for c in classify_critical_points(field) if c.kind == "maximum"]
        assert len(maxima) == 1

    def test_two_spec_persistence_as_constructed(self):
        field = generate_bump_field([GaussianSpec((0.25, 0.5), 0.06, 1.0),
                                     GaussianSpec((0.75, 0.5), 0.06, 0.2)], 64)
        pairs = [p for p in compute_persistence_pairs(field) if p.persistence > 1e-6]
        assert len(pairs) == 1
        assert pairs[0].persistence == pytest.approx(0.2, abs=0.02)

    def test_empty_specs_degenerate(self):
        field = generate_bump_field([], 16)
        maxima = [c for c in classify_critical_points(field) if c.kind == "maximum"]
        assert [m.vertex for m in maxima] == [(15, 15)]

    def test_bad_spec(self):
        with pytest.raises(SynthError):
            GaussianSpec((0.5, 0.5), -1.0, 1.0)

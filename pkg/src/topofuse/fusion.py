"""Arc-length parameterization of the histogram grid and its pullback to
the spatial domain.

Every histogram cell (including zero-density cells) receives the
normalized arc length of its nearest spline sample; with multiple branches
a cell maps to its closest branch k and stores k + arc length, so merged
values live in [0, k) with hard boundaries between branch regions.  The
fused volume looks each voxel's (V1, V2) bin up in that table, reusing the
exact binning rule of the joint histogram.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .histogram import DensityField, Histogram2D, bin_indices
from .spline import ProjectionIndex, SplineSamples, project_points
from .volio import Volume

class FusionError(ValueError):
    pass


@dataclass(frozen=True)
class FusedField:
    """Per-cell scalar lookup table F over the histogram grid."""

    n: int
    values: np.ndarray             # (n, n) float64
    branch_count: int
    branch_assignment: np.ndarray  # (n, n) int32 in [0, branch_count)
    mode: str                      # "single" | "merged"

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        assign = np.asarray(self.branch_assignment, dtype=np.int32)
        if values.shape != (self.n, self.n) or assign.shape != (self.n, self.n):
            raise FusionError("field shapes do not match n")
        if self.mode not in ("single", "merged"):
            raise FusionError(f"unknown mode {self.mode!r}")
        if self.branch_count < 1:
            raise FusionError("branch_count must be >= 1")
        values = values.copy()
        values.setflags(write=False)
        assign = assign.copy()
        assign.setflags(write=False)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "branch_assignment", assign)

    @property
    def upper(self) -> float:
        """Top of the value range: 1 for single mode, k for merged."""
        return 1.0 if self.mode == "single" else float(self.branch_count)


@dataclass(frozen=True)
class Histogram1D:
    edges: np.ndarray     # (bins + 1,) strictly increasing
    weights: np.ndarray   # (bins,) nonnegative
    label: str = ""

    def __post_init__(self):
        edges = np.asarray(self.edges, dtype=np.float64)
        weights = np.asarray(self.weights, dtype=np.float64)
        if edges.ndim != 1 or weights.ndim != 1 or len(edges) != len(weights) + 1:
            raise FusionError("edges must have exactly one more entry than weights")
        if not np.all(np.diff(edges) > 0):
            raise FusionError("edges must be strictly increasing")
        if weights.min() < 0:
            raise FusionError("negative weight")
        object.__setattr__(self, "edges", edges)
        object.__setattr__(self, "weights", weights)

    @property
    def bins(self) -> int:
        return len(self.weights)


def _grid_queries(n: int) -> np.ndarray:
    ii, jj = np.meshgrid(np.arange(n), np.arange(n), indexing="ij")
    return np.column_stack([ii.ravel(), jj.ravel()]).astype(np.float64)


def parameterize_grid(d: DensityField, samples: SplineSamples,
                      idx: ProjectionIndex) -> FusedField:
    """F(p) = normalized arc length of the nearest spline sample, for every
    cell center p of the histogram grid."""
    _, ell, _ = project_points(idx, samples, _grid_queries(d.n))
    return FusedField(n=d.n, values=ell.reshape(d.n, d.n), branch_count=1,
                      branch_assignment=np.zeros((d.n, d.n), dtype=np.int32),
                      mode="single")


def parameterize_multibranch(d: DensityField, branch_samples: list[SplineSamples],
                             idxs: list[ProjectionIndex]) -> FusedField:
    """Merged parameterization: each cell maps to its closest branch k
    (distance ties take the smaller branch id) and stores k + arc length.

    Arc lengths clamp just below 1 so merged values stay in [0, k) and
    floor(F) always equals the branch assignment.
    """
    if not branch_samples or len(branch_samples) != len(idxs):
        raise FusionError("need one projection index per branch")
    queries = _grid_queries(d.n)
    best_d = np.full(queries.shape[0], np.inf)
    best_ell = np.zeros(queries.shape[0])
    assign = np.zeros(queries.shape[0], dtype=np.int32)
    for k, (samples, idx) in enumerate(zip(branch_samples, idxs)):
        _, ell, dist = project_points(idx, samples, queries)
        closer = dist < best_d
        best_d[closer] = dist[closer]
        best_ell[closer] = ell[closer]
        assign[closer] = k
    # keep k + 1 strictly unreachable so floor(F) == assignment everywhere
    values = np.minimum(assign + best_ell,
                        np.nextafter((assign + 1).astype(np.float64), -np.inf))
    return FusedField(n=d.n, values=values.reshape(d.n, d.n),
                      branch_count=len(branch_samples),
                      branch_assignment=assign.reshape(d.n, d.n), mode="merged")


def fuse_volumes(v1: Volume, v2: Volume, F: FusedField, h: Histogram2D) -> Volume:
    """Pull the parameterization back to the spatial domain:
    V_f(t) = F(bin(V1(t), V2(t))), binned exactly like the histogram."""
    if v1.dims != v2.dims:
        raise FusionError(f"volume dims mismatch: {v1.dims} vs {v2.dims}")
    if F.n != h.n:
        raise FusionError(f"fused field n={F.n} does not match histogram n={h.n}")
    (lo1, hi1), (lo2, hi2) = h.axis_ranges
    for (lo, hi), v in (((lo1, hi1), v1), ((lo2, hi2), v2)):
        if v.value_range[1] < lo or v.value_range[0] > hi:
            raise FusionError(
                f"volume range {v.value_range} does not overlap histogram axis ({lo}, {hi})")
    i = bin_indices(v1.values, lo1, hi1, h.n)
    j = bin_indices(v2.values, lo2, hi2, h.n)
    fused = F.values[i, j]
    return Volume(dims=v1.dims, spacing=v1.spacing, values=fused,
                  value_range=(0.0, F.upper), name="fused")


def spline_density_histogram(h: Histogram2D, F: FusedField, bins: int = 256) -> Histogram1D:
    """Aggregate histogram counts along the parameterization: the 1D
    density distribution over the spline.  Total weight is conserved."""
    if bins < 1:
        raise FusionError("bins must be >= 1")
    upper = F.upper
    b = bin_indices(F.values.ravel(), 0.0, upper, bins)
    weights = np.bincount(b, weights=h.counts.ravel().astype(np.float64),
                          minlength=bins)
    return Histogram1D(edges=np.linspace(0.0, upper, bins + 1), weights=weights,
                       label="spline density")


def axis_projection_histogram(h: Histogram2D, axis: int) -> Histogram1D:
    """Marginal count distribution of axis 1 or 2 of the joint histogram."""
    if axis not in (1, 2):
        raise FusionError(f"axis must be 1 or 2, got {axis}")
    weights = h.counts.sum(axis=2 - axis).astype(np.float64)
    lo, hi = h.axis_ranges[axis - 1]
    return Histogram1D(edges=np.linspace(lo, hi, h.n + 1), weights=weights,
                       label=h.axis_names[axis - 1])


def count_peaks(h1: Histogram1D, min_persistence: float = 0.05):
    """1D persistence-based peak detection.

    Sweeping bins from high to low, a peak is born at a local maximum and
    merges into an older neighbor component at its lowest saddle level;
    peaks with persistence >= min_persistence * max(weights) are counted
    (the global maximum always counts, persistence infinity).  Equal
    weights order by bin index, larger index higher.

    Returns (count, peaks) with peaks as (bin index, weight, persistence)
    sorted by descending persistence then bin index.
    """
    w = h1.weights
    if h1.bins < 3:
        raise FusionError(f"need at least 3 bins, got {h1.bins}")
    order = np.lexsort((-np.arange(len(w)), -w))  # by weight desc, index desc
    comp_of = [-1] * len(w)
    peak_of = {}      # component root bin -> peak bin
    merged = []       # (peak bin, persistence)

    def find(b):
        while comp_of[b] != b:
            comp_of[b] = comp_of[comp_of[b]]
            b = comp_of[b]
        return b

    def higher(a, b):
        return (w[a], a) > (w[b], b)

    for b in order.tolist():
        left = b - 1 if b > 0 and comp_of[b - 1] != -1 else None
        right = b + 1 if b + 1 < len(w) and comp_of[b + 1] != -1 else None
        if left is None and right is None:
            comp_of[b] = b
            peak_of[b] = b
            continue
        if left is not None and right is not None:
            rl, rr = find(left), find(right)
            elder, younger = (rl, rr) if higher(peak_of[rl], peak_of[rr]) else (rr, rl)
            merged.append((peak_of[younger], float(w[peak_of[younger]] - w[b])))
            comp_of[younger] = elder
            comp_of[b] = elder
        else:
            comp_of[b] = find(left if left is not None else right)

    global_peak = int(np.lexsort((-np.arange(len(w)), -w))[0])
    peaks = [(global_peak, float(w[global_peak]), math.inf)]
    thr = min_persistence * float(w.max())
    for peak_bin, persistence in merged:
        if persistence >= thr:
            peaks.append((int(peak_bin), float(w[peak_bin]), persistence))
    peaks.sort(key=lambda t: (-t[2], t[0]))
    return len(peaks), peaks

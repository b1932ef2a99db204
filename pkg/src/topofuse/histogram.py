"""Pairwise joint histograms, log-normalized density fields, and
correlation-based volume pair selection.

The joint histogram of two co-registered volumes bins the value pairs
(V1(t), V2(t)) of every voxel t on an n x n grid.  Bins are half-open with
a closed top: values equal to (or beyond) the axis maximum clamp into the
last bin, so no voxel is ever dropped.  The log-normalized density field is
the scalar field all downstream topology operates on.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .volio import Volume

_CHUNK = 1 << 20  # fixed accumulation chunk; keeps reductions deterministic


class HistogramError(ValueError):
    pass


@dataclass(frozen=True)
class Histogram2D:
    """n x n joint bin counts plus the axis ranges that produced them."""

    n: int
    counts: np.ndarray                              # (n, n) int64, counts[i, j]
    axis_ranges: tuple[tuple[float, float], tuple[float, float]]
    axis_names: tuple[str, str] = ("axis1", "axis2")

    def __post_init__(self):
        counts = np.asarray(self.counts, dtype=np.int64)
        if counts.shape != (self.n, self.n):
            raise HistogramError(f"counts shape {counts.shape} != ({self.n}, {self.n})")
        if counts.min() < 0:
            raise HistogramError("negative bin count")
        (lo1, hi1), (lo2, hi2) = self.axis_ranges
        if not (hi1 > lo1 and hi2 > lo2):
            raise HistogramError(f"degenerate axis ranges {self.axis_ranges}")
        counts = counts.copy()
        counts.setflags(write=False)
        object.__setattr__(self, "counts", counts)
        object.__setattr__(self, "axis_ranges",
                           ((float(lo1), float(hi1)), (float(lo2), float(hi2))))

    @property
    def total_count(self) -> int:
        return int(self.counts.sum())


@dataclass(frozen=True)
class DensityField:
    """Log-normalized histogram, bin'(i,j) = log(c+1)/log(max+1), in [0, 1]."""

    n: int
    values: np.ndarray          # (n, n) float64
    source: Histogram2D

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        if values.shape != (self.n, self.n):
            raise HistogramError(f"values shape {values.shape} != ({self.n}, {self.n})")
        values = values.copy()
        values.setflags(write=False)
        object.__setattr__(self, "values", values)


def bin_indices(values: np.ndarray, lo: float, hi: float, n: int) -> np.ndarray:
    """Map values to bin indices: clamp(floor((v - lo)/(hi - lo) * n), 0, n-1).

    This single function is the binning rule shared by histogram
    construction and the fused-volume pullback.
    """
    scaled = np.floor((np.asarray(values, dtype=np.float64) - lo) / (hi - lo) * n)
    return np.clip(scaled, 0, n - 1).astype(np.int64)


def compute_joint_histogram(v1: Volume, v2: Volume, n: int = 1000,
                            ranges=None) -> Histogram2D:
    """Bin the voxelwise value pairs of two co-registered volumes.

    ``ranges`` defaults to each volume's own (vmin, vmax); pass explicit
    ((min1, max1), (min2, max2)) for histograms comparable across pairs.
    """
    if v1.dims != v2.dims:
        raise HistogramError(f"volume dims mismatch: {v1.dims} vs {v2.dims}")
    if n < 2:
        raise HistogramError(f"need at least 2 bins, got {n}")
    if ranges is None:
        ranges = (v1.value_range, v2.value_range)
    (lo1, hi1), (lo2, hi2) = ranges
    if not (hi1 > lo1 and hi2 > lo2):
        raise HistogramError(f"degenerate axis range in {ranges}")
    i = bin_indices(v1.values, lo1, hi1, n)
    j = bin_indices(v2.values, lo2, hi2, n)
    flat = np.bincount(i * n + j, minlength=n * n)
    counts = flat.reshape(n, n).astype(np.int64)
    return Histogram2D(n=n, counts=counts,
                       axis_ranges=((float(lo1), float(hi1)), (float(lo2), float(hi2))),
                       axis_names=(v1.name or "axis1", v2.name or "axis2"))


def log_normalize(h: Histogram2D) -> DensityField:
    """bin'(i,j) = log(bin(i,j)+1) / log(max_bin+1); all zeros if empty."""
    if h.total_count < 1:
        raise HistogramError("cannot normalize an empty histogram")
    max_bin = int(h.counts.max())
    if max_bin == 0:
        values = np.zeros((h.n, h.n))
    else:
        values = np.log1p(h.counts.astype(np.float64)) / math.log1p(max_bin)
    return DensityField(n=h.n, values=values, source=h)


def _compensated_moments(x: np.ndarray, y: np.ndarray):
    """Single-pass shifted sums with Kahan compensation across fixed chunks."""
    x0, y0 = float(x[0]), float(y[0])
    sums = np.zeros(5)   # sx, sy, sxx, syy, sxy
    comp = np.zeros(5)
    for start in range(0, x.size, _CHUNK):
        dx = x[start:start + _CHUNK] - x0
        dy = y[start:start + _CHUNK] - y0
        terms = np.array([dx.sum(), dy.sum(), (dx * dx).sum(),
                          (dy * dy).sum(), (dx * dy).sum()])
        t = terms - comp
        total = sums + t
        comp = (total - sums) - t
        sums = total
    return sums


def pearson_correlation(v1: Volume, v2: Volume) -> float:
    """Sample Pearson coefficient over all voxels.

    Uses shifted, compensated accumulation so the result is stable and
    affine-invariant to ~1e-10.  Raises on constant input (undefined).
    """
    if v1.dims != v2.dims:
        raise HistogramError(f"volume dims mismatch: {v1.dims} vs {v2.dims}")
    m = float(v1.values.size)
    sx, sy, sxx, syy, sxy = _compensated_moments(v1.values, v2.values)
    varx = sxx - sx * sx / m
    vary = syy - sy * sy / m
    if varx <= 0 or vary <= 0:
        raise HistogramError("correlation undefined for a constant volume")
    cov = sxy - sx * sy / m
    return float(np.clip(cov / math.sqrt(varx * vary), -1.0, 1.0))


def pair_selection_report(volumes: list[Volume], n: int = 1000, ranges=None):
    """Correlate and histogram every volume pair, ranked ascending by
    correlation (low correlation = spread-out, interesting histogram).

    Returns a list of ((idx_a, idx_b), correlation, Histogram2D); ties keep
    pair index order.
    """
    if len(volumes) < 2:
        raise HistogramError("need at least two volumes")
    report = []
    for (a, b) in itertools.combinations(range(len(volumes)), 2):
        corr = pearson_correlation(volumes[a], volumes[b])
        hist = compute_joint_histogram(volumes[a], volumes[b], n=n, ranges=ranges)
        report.append(((a, b), corr, hist))
    report.sort(key=lambda item: (item[1], item[0]))
    return report


def histogram_to_csv(h: Histogram2D, path) -> None:
    """CSV dump (i, j, count) of nonzero bins; intended for small n."""
    ii, jj = np.nonzero(h.counts)
    with open(path, "w") as f:
        f.write("i,j,count\n")
        for i, j in zip(ii.tolist(), jj.tolist()):
            f.write(f"{i},{j},{int(h.counts[i, j])}\n")

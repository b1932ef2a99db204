"""Topology-guided fusion of co-registered scalar volumes.

Builds a joint 2D histogram of two volumes, extracts a topology-guided path
through its density field (extremum graph, MST, diameter), smooths it with
a B-spline, parameterizes the histogram by arc length along the spline, and
pulls the parameterization back to the spatial domain as a single fused
volume ready for standard 1D transfer-function workflows.
"""

from .volio import Volume, Quantization, read_volume, write_volume, export_json, import_json
from .histogram import (Histogram2D, DensityField, compute_joint_histogram,
                        log_normalize, pearson_correlation, pair_selection_report)
from .topology2d import (GridField, CriticalPoint, PersistencePair, ExtremumGraph,
                         classify_critical_points, compute_persistence_pairs,
                         simplify, extract_extremum_graph)
from .pathfind import (WeightedGraph, TreePath, build_weighted_graph,
                       minimum_spanning_tree, tree_diameter_path, subpath_between,
                       trim_low_density, select_branches)
from .spline import (FittedSpline, SplineSamples, ProjectionIndex,
                     fit_smoothing_spline, sample_arclength,
                     build_projection_index, project_point, project_points)
from .fusion import (FusedField, Histogram1D, parameterize_grid,
                     parameterize_multibranch, fuse_volumes,
                     spline_density_histogram, axis_projection_histogram, count_peaks)
from .synth import GaussianSpec, generate_circular_gaussians, generate_bump_field
from .pipeline import PipelineConfig, run_fusion

__version__ = "0.1.0"

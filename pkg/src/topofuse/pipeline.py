"""Declarative pipeline configuration and the staged fusion runner shared
by the CLI and the session service.

A run records every parameter, per-stage wall time, and a sha256 content
hash of each artifact in ``manifest.json``; identical configurations and
inputs reproduce identical artifact hashes.
"""
from __future__ import annotations

import hashlib
import json
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import fusion, histogram, pathfind, spline, synth, topology2d, volio


class ConfigError(ValueError):
    pass


@dataclass
class PipelineConfig:
    """All knobs of one fusion run.  Unknown keys are rejected."""

    volumes: list[str] | None = None
    synth: dict | None = None
    bins: int = 1000
    ranges: list | None = None
    persistence_threshold: float = 0.0
    smoothing_factor: float = 0.01
    sample_count: int = 1_000_000
    tau: float = 0.0
    endpoints: list | None = None          # [a, b] node ids for one branch
    selections: list | None = None         # [[a, b], ...] for multi-branch
    seed: int = 42
    hist1d_bins: int = 256
    min_persistence: float = 0.05
    threads: int = 0                       # 0 = all cores
    output_dir: str = "."

    VALID_SYNTH_KEYS = ("k", "radius", "sigma", "voxels_per_blob", "seed",
                        "center", "truncate", "value_range")

    @classmethod
    def from_dict(cls, raw: dict) -> "PipelineConfig":
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(raw) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        cfg = cls(**raw)
        cfg.validate()
        return cfg

    def validate(self) -> None:
        if (self.volumes is None) == (self.synth is None):
            raise ConfigError("config needs exactly one of 'volumes' or 'synth'")
        if self.volumes is not None and len(self.volumes) != 2:
            raise ConfigError("'volumes' must list exactly two files")
        if self.synth is not None:
            bad = set(self.synth) - set(self.VALID_SYNTH_KEYS)
            if bad:
                raise ConfigError(f"unknown synth keys: {sorted(bad)}")
        if not (2 <= self.bins <= 8192):
            raise ConfigError(f"bins must be in [2, 8192], got {self.bins}")
        if self.persistence_threshold < 0:
            raise ConfigError(f"persistence_threshold must be >= 0, "
                              f"got {self.persistence_threshold}")
        if self.smoothing_factor < 0:
            raise ConfigError(f"smoothing_factor must be >= 0, got {self.smoothing_factor}")
        if not (2 <= self.sample_count <= 10_000_000):
            raise ConfigError(f"sample_count must be in [2, 1e7], got {self.sample_count}")
        if not (0.0 <= self.tau <= 1.0):
            raise ConfigError(f"tau must be in [0, 1], got {self.tau}")
        if not (0.0 <= self.min_persistence <= 1.0):
            raise ConfigError(f"min_persistence must be in [0, 1], got {self.min_persistence}")
        if self.hist1d_bins < 3:
            raise ConfigError(f"hist1d_bins must be >= 3, got {self.hist1d_bins}")
        if self.endpoints is not None and self.selections is not None:
            raise ConfigError("give either 'endpoints' or 'selections', not both")
        if self.endpoints is not None and len(self.endpoints) != 2:
            raise ConfigError("'endpoints' must be [a, b]")
        if self.selections is not None:
            if not self.selections or any(len(s) != 2 for s in self.selections):
                raise ConfigError("'selections' must be a nonempty list of [a, b] pairs")

    def to_dict(self) -> dict:
        return asdict(self)


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


@dataclass
class StageClock:
    stages: list[dict] = field(default_factory=list)

    def run(self, name: str, fn):
        t0 = time.perf_counter()
        out = fn()
        self.stages.append({"stage": name, "seconds": round(time.perf_counter() - t0, 4)})
        return out


@dataclass
class FusionResult:
    """In-memory handles to everything a fusion run produced."""

    volumes: tuple
    hist: histogram.Histogram2D
    density: histogram.DensityField
    simplified: topology2d.GridField
    graph: topology2d.ExtremumGraph
    weighted: pathfind.WeightedGraph
    mst: pathfind.WeightedGraph
    branches: list[pathfind.TreePath]
    splines: list[spline.FittedSpline]
    samples: list[spline.SplineSamples]
    fused_field: fusion.FusedField
    fused_volume: volio.Volume
    spline_hist: fusion.Histogram1D
    axis_hists: tuple[fusion.Histogram1D, fusion.Histogram1D]
    peak_counts: dict
    manifest: dict


def _load_volumes(cfg: PipelineConfig):
    if cfg.synth is not None:
        params = dict(cfg.synth)
        params.setdefault("seed", cfg.seed)
        if "center" in params:
            params["center"] = tuple(params["center"])
        if "value_range" in params:
            params["value_range"] = tuple(params["value_range"])
        return synth.generate_circular_gaussians(**params)
    return (volio.read_volume(cfg.volumes[0]), volio.read_volume(cfg.volumes[1]))


def run_fusion(cfg: PipelineConfig, out_dir=None, write_artifacts: bool = True) -> FusionResult:
    """Execute histogram -> simplify -> graph -> MST -> path -> spline ->
    parameterize -> fuse, recording timings and artifact hashes."""
    cfg.validate()
    spline.set_worker_count(cfg.threads)
    clock = StageClock()

    v1, v2 = clock.run("load_volumes", lambda: _load_volumes(cfg))
    ranges = None
    if cfg.ranges is not None:
        ranges = (tuple(cfg.ranges[0]), tuple(cfg.ranges[1]))
    hist = clock.run("histogram", lambda: histogram.compute_joint_histogram(
        v1, v2, n=cfg.bins, ranges=ranges))
    density = clock.run("log_normalize", lambda: histogram.log_normalize(hist))

    def do_simplify():
        fld = topology2d.GridField(density.values)
        if cfg.persistence_threshold == 0:
            return fld
        pairs = topology2d.compute_persistence_pairs(fld)
        return topology2d.simplify(fld, pairs, cfg.persistence_threshold)

    simplified = clock.run("simplify", do_simplify)
    graph = clock.run("extremum_graph", lambda: topology2d.extract_extremum_graph(simplified))
    sf = histogram.DensityField(n=density.n, values=simplified.values, source=hist)
    weighted = clock.run("weighted_graph", lambda: pathfind.build_weighted_graph(graph, sf))
    mst = clock.run("mst", lambda: pathfind.minimum_spanning_tree(weighted))

    def pick_paths():
        if cfg.selections is not None:
            branches = pathfind.select_branches(mst, [tuple(s) for s in cfg.selections])
        elif cfg.endpoints is not None:
            branches = [pathfind.subpath_between(mst, cfg.endpoints[0], cfg.endpoints[1])]
        else:
            branches = [pathfind.tree_diameter_path(mst)]
        if cfg.tau > 0:
            branches = [pathfind.trim_low_density(p, sf, cfg.tau) for p in branches]
        return branches

    branches = clock.run("path", pick_paths)

    def fit_all():
        fitted, sampled, indexes = [], [], []
        for p in branches:
            fs = spline.fit_smoothing_spline(p, cfg.smoothing_factor)
            ss = spline.sample_arclength(fs, cfg.sample_count)
            fitted.append(fs)
            sampled.append(ss)
            indexes.append(spline.build_projection_index(ss))
        return fitted, sampled, indexes

    splines, samples, indexes = clock.run("spline", fit_all)

    def parameterize():
        if len(samples) == 1:
            return fusion.parameterize_grid(sf, samples[0], indexes[0])
        return fusion.parameterize_multibranch(sf, samples, indexes)

    fused_field = clock.run("parameterize", parameterize)
    fused_volume = clock.run("fuse", lambda: fusion.fuse_volumes(v1, v2, fused_field, hist))

    def diagnostics():
        sh = fusion.spline_density_histogram(hist, fused_field, bins=cfg.hist1d_bins)
        a1 = fusion.axis_projection_histogram(hist, 1)
        a2 = fusion.axis_projection_histogram(hist, 2)
        counts = {
            "spline": fusion.count_peaks(sh, cfg.min_persistence)[0],
            "axis1": fusion.count_peaks(a1, cfg.min_persistence)[0],
            "axis2": fusion.count_peaks(a2, cfg.min_persistence)[0],
        }
        return sh, a1, a2, counts

    spline_hist, axis1, axis2, peak_counts = clock.run("diagnostics", diagnostics)

    manifest = {
        "schema_version": volio.SCHEMA_VERSION,
        "config": cfg.to_dict(),
        "stages": clock.stages,
        "peak_counts": peak_counts,
        "artifacts": {},
    }
    result = FusionResult(
        volumes=(v1, v2), hist=hist, density=density, simplified=simplified,
        graph=graph, weighted=weighted, mst=mst, branches=branches,
        splines=splines, samples=samples, fused_field=fused_field,
        fused_volume=fused_volume, spline_hist=spline_hist,
        axis_hists=(axis1, axis2), peak_counts=peak_counts, manifest=manifest)

    if write_artifacts:
        out = Path(out_dir if out_dir is not None else cfg.output_dir)
        out.mkdir(parents=True, exist_ok=True)
        clock.run("write_artifacts", lambda: write_fusion_artifacts(result, out))
        manifest["stages"] = clock.stages
        (out / "manifest.json").write_text(json.dumps(manifest, indent=1) + "\n")
    return result


def write_fusion_artifacts(res: FusionResult, out: Path) -> dict:
    """Write every figure-relevant artifact; fills manifest['artifacts']."""
    out = Path(out)
    v1, v2 = res.volumes
    files = {}

    def record(name):
        files[name] = sha256_file(out / name)

    volio.write_volume(v1, out / "volume1.raw", dtype="f64")
    volio.write_volume(v2, out / "volume2.raw", dtype="f64")
    record("volume1.raw")
    record("volume2.raw")

    h = res.hist
    volio.write_grid(h.counts, out / "histogram.bin", dtype=np.int64,
                     meta={"kind": "histogram2d", "n": h.n,
                           "axis_ranges": [list(r) for r in h.axis_ranges],
                           "axis_names": list(h.axis_names),
                           "total_count": h.total_count})
    record("histogram.bin")
    volio.write_grid(res.density.values, out / "density.bin", dtype=np.float64,
                     meta={"kind": "density", "n": h.n})
    record("density.bin")
    volio.write_grid(res.simplified.values, out / "simplified.bin", dtype=np.float64,
                     meta={"kind": "density", "n": h.n})
    record("simplified.bin")

    volio.export_json(res.graph, out / "graph.json")
    record("graph.json")
    mst_doc = {
        "schema": "weighted_forest", "schema_version": volio.SCHEMA_VERSION,
        "nodes": [{"id": nd.id, "vertex": list(nd.vertex), "kind": nd.kind,
                   "density": nd.density} for nd in res.mst.nodes],
        "edges": [{"u": e.u, "v": e.v, "weight": e.weight} for e in res.mst.edges],
    }
    (out / "mst.json").write_text(json.dumps(mst_doc, indent=1) + "\n")
    record("mst.json")

    for p in res.branches:
        name = f"path_{p.branch_id}.json"
        volio.export_json(p, out / name)
        record(name)
    stride = max(1, len(res.samples[0].points) // 4096)
    for ss in res.samples:
        name = f"spline_{ss.branch_id}.json"
        volio.export_json(ss, out / name, stride=stride)
        record(name)

    F = res.fused_field
    volio.write_grid(F.values, out / "fused_field.bin", dtype=np.float64,
                     meta={"kind": "fused_field", "n": F.n, "mode": F.mode,
                           "branch_count": F.branch_count})
    record("fused_field.bin")
    volio.write_grid(F.branch_assignment, out / "branch_assignment.bin", dtype=np.int32,
                     meta={"kind": "branch_assignment", "n": F.n})
    record("branch_assignment.bin")

    volio.write_volume(res.fused_volume, out / "fused_volume.raw", dtype="f32")
    record("fused_volume.raw")

    for name, h1 in (("spline_hist.json", res.spline_hist),
                     ("axis1_hist.json", res.axis_hists[0]),
                     ("axis2_hist.json", res.axis_hists[1])):
        volio.export_json(h1, out / name)
        record(name)
        csv_name = name.replace(".json", ".csv")
        _hist1d_csv(h1, out / csv_name)
        record(csv_name)

    (out / "peaks.json").write_text(json.dumps(
        {"schema_version": volio.SCHEMA_VERSION, "peak_counts": res.peak_counts},
        indent=1) + "\n")
    record("peaks.json")

    res.manifest["artifacts"] = files
    return files


def _hist1d_csv(h1: fusion.Histogram1D, path) -> None:
    centers = (h1.edges[:-1] + h1.edges[1:]) / 2.0
    with open(path, "w") as f:
        f.write("bin_center,weight\n")
        for c, w in zip(centers.tolist(), h1.weights.tolist()):
            f.write(f"{c!r},{w!r}\n")

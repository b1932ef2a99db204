"""Batch pipeline driver.

Every stage runs headless and composes through files, so each
figure-relevant artifact (histogram, simplified field, graph, path, spline,
parameterized grid, fused volume, 1D histograms) can be produced and
inspected independently.

Exit codes: 0 ok, 1 runtime failure, 2 usage or config error.
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import fusion, histogram, pathfind, spline, synth, topology2d, volio
from .pipeline import ConfigError, PipelineConfig, run_fusion

EXIT_OK = 0
EXIT_RUNTIME = 1
EXIT_USAGE = 2


def _load_config(args) -> PipelineConfig:
    raw = {}
    if args.config:
        raw = json.loads(Path(args.config).read_text())
    overrides = {k: v for k, v in vars(args).items()
                 if k in PipelineConfig.__dataclass_fields__ and v is not None}
    raw.update(overrides)
    return PipelineConfig.from_dict(raw)


def cmd_correlate(args) -> int:
    vols = [volio.read_volume(p) for p in args.volumes]
    report = histogram.pair_selection_report(vols, n=args.bins)
    rows = []
    print(f"{'pair':<16}{'correlation':>12}")
    for (a, b), corr, _h in report:
        na = vols[a].name or f"v{a}"
        nb = vols[b].name or f"v{b}"
        print(f"{na + ' / ' + nb:<16}{corr:>12.3f}")
        rows.append({"pair": [a, b], "names": [na, nb], "correlation": corr})
    if args.out:
        Path(args.out).write_text(json.dumps(
            {"schema_version": volio.SCHEMA_VERSION, "pairs": rows}, indent=1) + "\n")
    return EXIT_OK


def cmd_histogram(args) -> int:
    v1 = volio.read_volume(args.volumes[0])
    v2 = volio.read_volume(args.volumes[1])
    ranges = None
    if args.ranges:
        r = args.ranges
        ranges = ((r[0], r[1]), (r[2], r[3]))
    h = histogram.compute_joint_histogram(v1, v2, n=args.bins, ranges=ranges)
    d = histogram.log_normalize(h)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    volio.write_grid(h.counts, out / "histogram.bin", dtype=np.int64,
                     meta={"kind": "histogram2d", "n": h.n,
                           "axis_ranges": [list(r) for r in h.axis_ranges],
                           "axis_names": list(h.axis_names),
                           "total_count": h.total_count})
    volio.write_grid(d.values, out / "density.bin", dtype=np.float64,
                     meta={"kind": "density", "n": h.n})
    if h.n <= 512:
        histogram.histogram_to_csv(h, out / "histogram.csv")
    print(f"histogram {h.n}x{h.n}, {h.total_count} voxels -> {out}")
    return EXIT_OK


def _read_density(path) -> topology2d.GridField:
    values, meta = volio.read_grid(path)
    return topology2d.GridField(np.asarray(values, dtype=np.float64))


def cmd_topo(args) -> int:
    field = _read_density(args.density)
    if args.threshold > 0:
        pairs = topology2d.compute_persistence_pairs(field)
        field = topology2d.simplify(field, pairs, args.threshold)
    graph = topology2d.extract_extremum_graph(field)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    volio.write_grid(field.values, out / "simplified.bin", dtype=np.float64,
                     meta={"kind": "density", "n": field.n})
    volio.export_json(graph, out / "graph.json")
    print(f"{len(graph.maxima)} maxima, {len(graph.saddles)} saddles, "
          f"{len(graph.edges)} separatrices -> {out}")
    return EXIT_OK


def cmd_path(args) -> int:
    graph = volio.import_json(args.graph)
    field = _read_density(args.density)
    h2d = histogram.Histogram2D(n=field.n, counts=np.zeros((field.n, field.n), dtype=np.int64)
                                + 1, axis_ranges=((0, 1), (0, 1)))
    d = histogram.DensityField(n=field.n, values=field.values, source=h2d)
    weighted = pathfind.build_weighted_graph(graph, d)
    mst = pathfind.minimum_spanning_tree(weighted)
    if args.endpoints:
        p = pathfind.subpath_between(mst, args.endpoints[0], args.endpoints[1])
        branches = [p]
    else:
        branches = [pathfind.tree_diameter_path(mst)]
    if args.tau > 0:
        branches = [pathfind.trim_low_density(p, d, args.tau) for p in branches]
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for p in branches:
        volio.export_json(p, out / f"path_{p.branch_id}.json")
    print(f"path with {len(branches[0])} nodes -> {out}")
    return EXIT_OK


def cmd_spline(args) -> int:
    p = volio.import_json(args.path)
    fs = spline.fit_smoothing_spline(p, args.smoothing)
    ss = spline.sample_arclength(fs, args.samples)
    volio.export_json(ss, args.out, stride=args.stride)
    print(f"spline length {ss.total_length:.3f}, max residual {fs.max_residual:.4g} "
          f"-> {args.out}")
    return EXIT_OK


def cmd_fuse(args) -> int:
    cfg = _load_config(args)
    result = run_fusion(cfg, out_dir=args.out or cfg.output_dir)
    print(json.dumps({"peak_counts": result.peak_counts,
                      "stages": result.manifest["stages"]}, indent=1))
    return EXIT_OK


def cmd_peaks(args) -> int:
    h1 = volio.import_json(args.histogram)
    count, peaks = fusion.count_peaks(h1, args.min_persistence)
    doc = {"schema_version": volio.SCHEMA_VERSION, "count": count,
           "peaks": [{"bin": b, "weight": w,
                      "persistence": (None if p == float("inf") else p)}
                     for b, w, p in peaks]}
    print(json.dumps(doc, indent=1))
    return EXIT_OK


def cmd_synth(args) -> int:
    v1, v2 = synth.generate_circular_gaussians(
        k=args.k, radius=args.radius, sigma=args.sigma,
        voxels_per_blob=args.voxels_per_blob, seed=args.seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    volio.write_volume(v1, out / "synth1.raw", dtype="f64")
    volio.write_volume(v2, out / "synth2.raw", dtype="f64")
    print(f"wrote {v1.dims} volumes -> {out}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="topofuse",
                                 description="topology-guided volume fusion pipeline")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("correlate", help="rank volume pairs by Pearson correlation")
    p.add_argument("volumes", nargs="+")
    p.add_argument("--bins", type=int, default=256)
    p.add_argument("--out", help="optional JSON report path")
    p.set_defaults(fn=cmd_correlate)

    p = sub.add_parser("histogram", help="joint histogram + log density of two volumes")
    p.add_argument("volumes", nargs=2)
    p.add_argument("--bins", type=int, default=1000)
    p.add_argument("--ranges", type=float, nargs=4, metavar=("MIN1", "MAX1", "MIN2", "MAX2"))
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_histogram)

    p = sub.add_parser("topo", help="simplify a density grid and extract the extremum graph")
    p.add_argument("density", help="density grid (.bin) from the histogram step")
    p.add_argument("--threshold", type=float, default=0.0)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_topo)

    p = sub.add_parser("path", help="MST + diameter or endpoint path from a graph")
    p.add_argument("graph", help="graph.json from the topo step")
    p.add_argument("--density", required=True)
    p.add_argument("--endpoints", type=int, nargs=2)
    p.add_argument("--tau", type=float, default=0.0)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_path)

    p = sub.add_parser("spline", help="fit + arc-length sample a path")
    p.add_argument("path", help="path_*.json from the path step")
    p.add_argument("--smoothing", type=float, default=0.01)
    p.add_argument("--samples", type=int, default=1_000_000)
    p.add_argument("--stride", type=int, default=256, help="export decimation stride")
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_spline)

    p = sub.add_parser("fuse", help="run the full fusion pipeline from a config")
    p.add_argument("--config", help="JSON config file (CLI flags override)")
    p.add_argument("--volumes", nargs=2)
    p.add_argument("--bins", type=int)
    p.add_argument("--persistence-threshold", dest="persistence_threshold", type=float)
    p.add_argument("--smoothing-factor", dest="smoothing_factor", type=float)
    p.add_argument("--sample-count", dest="sample_count", type=int)
    p.add_argument("--tau", type=float)
    p.add_argument("--seed", type=int)
    p.add_argument("--threads", type=int)
    p.add_argument("--out", help="output directory (overrides config output_dir)")
    p.set_defaults(fn=cmd_fuse)

    p = sub.add_parser("peaks", help="persistence-based peak count of a 1D histogram")
    p.add_argument("histogram", help="Histogram1D JSON artifact")
    p.add_argument("--min-persistence", dest="min_persistence", type=float, default=0.05)
    p.set_defaults(fn=cmd_peaks)

    p = sub.add_parser("synth", help="generate the circular-Gaussians volume pair")
    p.add_argument("--k", type=int, default=8)
    p.add_argument("--radius", type=float, default=0.3)
    p.add_argument("--sigma", type=float, default=0.048)
    p.add_argument("--voxels-per-blob", dest="voxels_per_blob", type=int, default=1_000_000)
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_synth)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    try:
        return args.fn(args)
    except (ConfigError, json.JSONDecodeError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        print(f"error ({type(exc).__name__}): {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())

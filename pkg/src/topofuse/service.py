"""HTTP facade over the fusion pipeline for the interactive UI.

Each session owns one volume pair and walks the pipeline DAG: histogram ->
simplify -> graph -> path -> fuse; requesting a stage before its
predecessor returns 409.  Per-session mutations are serialized with
reject-and-retry (a busy session answers 409 with Retry-After); reads
serve immutable snapshots.  Fusion runs the exact batch pipeline, so
artifacts are byte-identical to ``topofuse fuse`` with the same
parameters.

Large grids travel as binary payloads (16-byte header: magic, rows, cols,
dtype code) rather than JSON; ``stride`` decimates for previews.
"""
from __future__ import annotations

import argparse
import json
import os
import secrets
import tempfile
import threading
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import uvicorn
from fastapi import FastAPI, HTTPException, Response
from pydantic import BaseModel

from . import histogram, pathfind, topology2d, volio
from .pipeline import ConfigError, PipelineConfig, run_fusion

SCHEMA_VERSION = volio.SCHEMA_VERSION


class CreateSessionBody(BaseModel):
    volumes: list[str] | None = None
    synth: dict | None = None
    bins: int = 1000
    ranges: list | None = None


class SimplifyBody(BaseModel):
    threshold: float


class PathBody(BaseModel):
    a: int | None = None
    b: int | None = None
    selections: list[list[int]] | None = None
    tau: float | None = None


class FuseBody(BaseModel):
    smoothing: float = 0.01
    sample_count: int = 1_000_000
    hist1d_bins: int = 256
    min_persistence: float = 0.05


@dataclass
class Session:
    id: str
    config: PipelineConfig
    directory: Path
    volumes: tuple = None
    hist: histogram.Histogram2D = None
    density: histogram.DensityField = None
    threshold: float | None = None
    simplified: topology2d.GridField = None
    graph: topology2d.ExtremumGraph = None
    mst: pathfind.WeightedGraph = None
    diameter: pathfind.TreePath = None
    branches: list = None
    tau: float = 0.0
    endpoints: list | None = None
    selections: list | None = None
    last_result: object = None
    lock: threading.Lock = field(default_factory=threading.Lock)


def _busy() -> HTTPException:
    return HTTPException(status_code=409, detail="session busy, retry",
                         headers={"Retry-After": "1"})


def _grid_response(values: np.ndarray, dtype, stride: int) -> Response:
    if stride < 1:
        raise HTTPException(status_code=422, detail="stride must be >= 1")
    arr = values[::stride, ::stride]
    return Response(content=volio.pack_grid(arr, dtype=dtype),
                    media_type="application/octet-stream")


def create_app(data_dir: str | None = None) -> FastAPI:
    app = FastAPI(title="topofuse session service")
    sessions: dict[str, Session] = {}
    base_dir = Path(data_dir) if data_dir else Path(tempfile.mkdtemp(prefix="topofuse-"))
    base_dir.mkdir(parents=True, exist_ok=True)
    app.state.sessions = sessions

    def get_session(sid: str) -> Session:
        s = sessions.get(sid)
        if s is None:
            raise HTTPException(status_code=404, detail=f"unknown session {sid}")
        return s

    @app.post("/sessions")
    def create_session(body: CreateSessionBody):
        raw = {"bins": body.bins}
        if body.volumes is not None:
            raw["volumes"] = body.volumes
        if body.synth is not None:
            raw["synth"] = body.synth
        if body.ranges is not None:
            raw["ranges"] = body.ranges
        try:
            cfg = PipelineConfig.from_dict(raw)
        except ConfigError as exc:
            raise HTTPException(status_code=422, detail=str(exc))
        sid = secrets.token_hex(8)
        sdir = base_dir / sid
        sdir.mkdir(parents=True, exist_ok=True)
        s = Session(id=sid, config=cfg, directory=sdir)
        from .pipeline import _load_volumes
        try:
            s.volumes = _load_volumes(cfg)
        except FileNotFoundError as exc:
            raise HTTPException(status_code=422, detail=str(exc))
        ranges = None
        if cfg.ranges is not None:
            ranges = (tuple(cfg.ranges[0]), tuple(cfg.ranges[1]))
        s.hist = histogram.compute_joint_histogram(*s.volumes, n=cfg.bins, ranges=ranges)
        s.density = histogram.log_normalize(s.hist)
        sessions[sid] = s
        return {"schema_version": SCHEMA_VERSION, "session_id": sid,
                "dims": list(s.volumes[0].dims), "bins": cfg.bins}

    @app.get("/sessions/{sid}/histogram")
    def get_histogram(sid: str, scale: str = "log", stride: int = 1):
        s = get_session(sid)
        if scale == "linear":
            return _grid_response(s.hist.counts, np.int64, stride)
        if scale == "log":
            return _grid_response(s.density.values, np.float32, stride)
        raise HTTPException(status_code=422, detail=f"unknown scale {scale!r}")

    @app.post("/sessions/{sid}/simplify")
    def simplify(sid: str, body: SimplifyBody):
        s = get_session(sid)
        if body.threshold < 0:
            raise HTTPException(status_code=422, detail="threshold must be >= 0")
        if not s.lock.acquire(blocking=False):
            raise _busy()
        try:
            fld = topology2d.GridField(s.density.values)
            if body.threshold > 0:
                pairs = topology2d.compute_persistence_pairs(fld)
                fld = topology2d.simplify(fld, pairs, body.threshold)
            s.simplified = fld
            s.threshold = body.threshold
            s.graph = s.mst = s.diameter = None
            s.branches = None
            cps = topology2d.classify_critical_points(fld)
            kinds = {"minimum": 0, "saddle": 0, "maximum": 0}
            for cp in cps:
                kinds[cp.kind] += 1
            return {"schema_version": SCHEMA_VERSION, "threshold": body.threshold,
                    "critical_points": kinds}
        finally:
            s.lock.release()

    def _ensure_graph(s: Session):
        if s.simplified is None:
            raise HTTPException(status_code=409,
                                detail="simplify must run before the graph stage")
        if s.graph is None:
            s.graph = topology2d.extract_extremum_graph(s.simplified)
            sf = histogram.DensityField(n=s.density.n, values=s.simplified.values,
                                        source=s.hist)
            weighted = pathfind.build_weighted_graph(s.graph, sf)
            s.mst = pathfind.minimum_spanning_tree(weighted)
            s.diameter = pathfind.tree_diameter_path(s.mst)
            s.branches = [s.diameter]
            s.endpoints = None
            s.selections = None

    @app.get("/sessions/{sid}/graph")
    def get_graph(sid: str):
        s = get_session(sid)
        with s.lock:
            _ensure_graph(s)
        path_doc = {
            "node_ids": list(s.diameter.node_ids),
            "vertices": [list(v) for v in s.diameter.vertices],
            "densities": s.diameter.densities,
        }
        return {
            "schema_version": SCHEMA_VERSION,
            "n": s.graph.n,
            "nodes": [{"id": nd.id, "vertex": list(nd.vertex), "kind": nd.kind,
                       "density": nd.density} for nd in s.mst.nodes],
            "mst_edges": [{"u": e.u, "v": e.v, "weight": e.weight,
                           "polyline": np.asarray(e.polyline).tolist()}
                          for e in s.mst.edges],
            "diameter": path_doc,
        }

    @app.post("/sessions/{sid}/path")
    def post_path(sid: str, body: PathBody):
        s = get_session(sid)
        if not s.lock.acquire(blocking=False):
            raise _busy()
        try:
            _ensure_graph(s)
            sf = histogram.DensityField(n=s.density.n, values=s.simplified.values,
                                        source=s.hist)
            try:
                if body.selections is not None:
                    branches = pathfind.select_branches(
                        s.mst, [tuple(p) for p in body.selections])
                    s.selections = [list(p) for p in body.selections]
                    s.endpoints = None
                elif body.a is not None and body.b is not None:
                    branches = [pathfind.subpath_between(s.mst, body.a, body.b)]
                    s.endpoints = [body.a, body.b]
                    s.selections = None
                else:
                    branches = [s.diameter]
                    s.endpoints = None
                    s.selections = None
                tau = body.tau if body.tau is not None else 0.0
                if not (0.0 <= tau <= 1.0):
                    raise pathfind.PathError(f"tau must be in [0, 1], got {tau}")
                if tau > 0:
                    branches = [pathfind.trim_low_density(p, sf, tau) for p in branches]
                s.tau = tau
            except pathfind.PathError as exc:
                raise HTTPException(status_code=422, detail=str(exc))
            s.branches = branches
            return {
                "schema_version": SCHEMA_VERSION,
                "paths": [{
                    "branch_id": p.branch_id,
                    "node_ids": list(p.node_ids),
                    "vertices": [list(v) for v in p.vertices],
                    "densities": p.densities,
                    "polyline": np.asarray(p.polyline).tolist(),
                } for p in branches],
            }
        finally:
            s.lock.release()

    @app.post("/sessions/{sid}/fuse")
    def fuse(sid: str, body: FuseBody):
        s = get_session(sid)
        if s.branches is None:
            raise HTTPException(status_code=409,
                                detail="a path must exist before fusion (run graph/path)")
        if not s.lock.acquire(blocking=False):
            raise _busy()
        try:
            raw = s.config.to_dict()
            raw.update({
                "persistence_threshold": s.threshold or 0.0,
                "smoothing_factor": body.smoothing,
                "sample_count": body.sample_count,
                "tau": s.tau,
                "endpoints": s.endpoints,
                "selections": s.selections,
                "hist1d_bins": body.hist1d_bins,
                "min_persistence": body.min_persistence,
                "output_dir": str(s.directory),
            })
            try:
                cfg = PipelineConfig.from_dict(raw)
            except ConfigError as exc:
                raise HTTPException(status_code=422, detail=str(exc))
            result = run_fusion(cfg, out_dir=s.directory)
            s.last_result = result
            return {
                "schema_version": SCHEMA_VERSION,
                "peak_counts": result.peak_counts,
                "artifacts": sorted(result.manifest["artifacts"]),
                "artifact_hashes": result.manifest["artifacts"],
                "mode": result.fused_field.mode,
                "branch_count": result.fused_field.branch_count,
                "histograms": {
                    "spline": volio._hist1d_to_doc(result.spline_hist),
                    "axis1": volio._hist1d_to_doc(result.axis_hists[0]),
                    "axis2": volio._hist1d_to_doc(result.axis_hists[1]),
                },
            }
        finally:
            s.lock.release()

    @app.get("/sessions/{sid}/fused/preview")
    def fused_preview(sid: str, stride: int = 1):
        s = get_session(sid)
        if s.last_result is None:
            raise HTTPException(status_code=409, detail="no fusion has run yet")
        return _grid_response(s.last_result.fused_field.values, np.float32, stride)

    @app.get("/sessions/{sid}/fused/assignment")
    def fused_assignment(sid: str, stride: int = 1):
        s = get_session(sid)
        if s.last_result is None:
            raise HTTPException(status_code=409, detail="no fusion has run yet")
        return _grid_response(s.last_result.fused_field.branch_assignment,
                              np.int32, stride)

    @app.get("/sessions/{sid}/artifacts/{name}")
    def artifact(sid: str, name: str):
        s = get_session(sid)
        path = (s.directory / name).resolve()
        if s.directory.resolve() not in path.parents or not path.exists():
            raise HTTPException(status_code=404, detail=f"no artifact {name}")
        return Response(content=path.read_bytes(),
                        media_type="application/octet-stream")

    @app.get("/sessions/{sid}/manifest")
    def manifest(sid: str):
        s = get_session(sid)
        path = s.directory / "manifest.json"
        if not path.exists():
            raise HTTPException(status_code=409, detail="no fusion has run yet")
        return json.loads(path.read_text())

    return app


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(prog="topofuse-serve")
    ap.add_argument("--host", default=os.environ.get("TOPOFUSE_HOST", "127.0.0.1"))
    ap.add_argument("--port", type=int, default=int(os.environ.get("TOPOFUSE_PORT", "8787")))
    ap.add_argument("--data-dir", default=os.environ.get("TOPOFUSE_DATA_DIR"))
    args = ap.parse_args(argv)
    uvicorn.run(create_app(args.data_dir), host=args.host, port=args.port)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())

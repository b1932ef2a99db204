"""Scalar volume and artifact I/O.

The native volume format is a raw binary payload next to a small ``.meta``
text sidecar (dims, spacing, dtype, endianness, range, name).  A subset of
NRRD (attached or detached header, raw or gzip encoding) is supported for
interchange with scanner exports.  Values are widened to float64 on load;
files that do not declare a value range get one computed from the data.

JSON artifact export (graphs, paths, decimated spline samples, 1D
histograms) is schema-versioned; :func:`import_json` refuses unknown
versions instead of guessing.
"""
from __future__ import annotations

import gzip
import json
import math
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

SCHEMA_VERSION = 1

_DTYPES = {
    "u8": np.dtype("uint8"),
    "i16": np.dtype("int16"),
    "u16": np.dtype("uint16"),
    "f32": np.dtype("float32"),
    "f64": np.dtype("float64"),
}

# NRRD type aliases -> native dtype code
_NRRD_TYPES = {
    "uchar": "u8", "unsigned char": "u8", "uint8": "u8", "uint8_t": "u8",
    "short": "i16", "short int": "i16", "signed short": "i16",
    "int16": "i16", "int16_t": "i16",
    "ushort": "u16", "unsigned short": "u16", "uint16": "u16", "uint16_t": "u16",
    "float": "f32", "float32": "f32",
    "double": "f64", "float64": "f64",
}
_NRRD_TYPE_NAMES = {"u8": "uchar", "i16": "short", "u16": "ushort",
                    "f32": "float", "f64": "double"}


class VolumeError(ValueError):
    """Invalid volume data or metadata."""


class FormatError(VolumeError):
    """Malformed, missing, or contradictory file content."""


@dataclass(frozen=True)
class Volume:
    """A 3D scalar grid with value-range metadata.

    ``values`` is a flat float64 array in x-fastest order, i.e. element
    (i, j, k) lives at index ``i + nx*(j + ny*k)``.  Instances are immutable
    and safe to share across threads.
    """

    dims: tuple[int, int, int]
    spacing: tuple[float, float, float]
    values: np.ndarray
    value_range: tuple[float, float]
    name: str = ""

    def __post_init__(self):
        dims = tuple(int(d) for d in self.dims)
        if len(dims) != 3 or any(d <= 0 for d in dims):
            raise VolumeError(f"dims must be three positive integers, got {self.dims}")
        spacing = tuple(float(s) for s in self.spacing)
        if len(spacing) != 3 or any(s <= 0 for s in spacing):
            raise VolumeError(f"spacing must be three positive reals, got {self.spacing}")
        values = np.asarray(self.values, dtype=np.float64).ravel()
        if values.size != dims[0] * dims[1] * dims[2]:
            raise VolumeError(
                f"values length {values.size} != product of dims {dims}")
        if not np.all(np.isfinite(values)):
            raise VolumeError("volume contains non-finite values")
        vmin, vmax = (float(v) for v in self.value_range)
        if not (vmin <= vmax):
            raise VolumeError(f"value_range must satisfy vmin <= vmax, got {self.value_range}")
        if values.size and (values.min() < vmin or values.max() > vmax):
            raise VolumeError(
                f"values [{values.min()}, {values.max()}] fall outside "
                f"declared range [{vmin}, {vmax}]")
        values = values.copy()
        values.setflags(write=False)
        object.__setattr__(self, "dims", dims)
        object.__setattr__(self, "spacing", spacing)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "value_range", (vmin, vmax))

    @classmethod
    def from_array(cls, arr, spacing=(1.0, 1.0, 1.0), name="", value_range=None):
        """Build a volume from a (nx, ny, nz)-indexed array."""
        arr = np.asarray(arr, dtype=np.float64)
        if arr.ndim != 3:
            raise VolumeError(f"expected a 3D array, got shape {arr.shape}")
        if value_range is None:
            value_range = (float(arr.min()), float(arr.max()))
        return cls(dims=arr.shape, spacing=spacing, values=arr.ravel(order="F"),
                   value_range=value_range, name=name)

    def as_array(self) -> np.ndarray:
        """Return the values as a (nx, ny, nz)-indexed array (view)."""
        return self.values.reshape(self.dims, order="F")

    def with_name(self, name: str) -> "Volume":
        return replace(self, name=name)


@dataclass(frozen=True)
class Quantization:
    """Policy for storing real-valued volumes in an integer format.

    ``stored = round(value * scale)``, clipped to the target dtype's range.
    """

    scale: float

    def __post_init__(self):
        if not (self.scale > 0 and math.isfinite(self.scale)):
            raise VolumeError(f"quantization scale must be a positive real, got {self.scale}")


def _parse_kv_lines(text: str) -> dict[str, str]:
    fields = {}
    for raw in text.splitlines():
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if ":" not in line:
            raise FormatError(f"malformed header line: {raw!r}")
        key, _, value = line.partition(":")
        fields[key.strip().lower()] = value.strip()
    return fields


def _np_dtype(code: str, endian: str) -> np.dtype:
    if code not in _DTYPES:
        raise FormatError(f"unsupported dtype {code!r} (expected one of {sorted(_DTYPES)})")
    dt = _DTYPES[code]
    if dt.itemsize > 1:
        if endian not in ("little", "big"):
            raise FormatError(f"endian must be 'little' or 'big', got {endian!r}")
        dt = dt.newbyteorder("<" if endian == "little" else ">")
    return dt


def _decode_payload(payload: bytes, dims, dtype: np.dtype, path) -> np.ndarray:
    expected = dims[0] * dims[1] * dims[2] * dtype.itemsize
    if len(payload) != expected:
        raise FormatError(
            f"size mismatch in {path}: payload is {len(payload)} bytes, "
            f"dims {dims} with {dtype.itemsize}-byte elements need {expected}")
    values = np.frombuffer(payload, dtype=dtype).astype(np.float64)
    if not np.all(np.isfinite(values)):
        raise FormatError(f"{path}: payload contains non-finite values")
    return values


def _read_raw_meta(path: Path) -> Volume:
    meta_path = Path(str(path) + ".meta")
    if not meta_path.exists():
        raise FormatError(f"missing sidecar {meta_path}")
    fields = _parse_kv_lines(meta_path.read_text())
    if "dims" not in fields:
        raise FormatError(f"{meta_path}: missing required field 'dims'")
    if "dtype" not in fields:
        raise FormatError(f"{meta_path}: missing required field 'dtype'")
    try:
        dims = tuple(int(t) for t in fields["dims"].split())
    except ValueError as exc:
        raise FormatError(f"{meta_path}: bad dims {fields['dims']!r}") from exc
    if len(dims) != 3:
        raise FormatError(f"{meta_path}: dims must have three entries, got {fields['dims']!r}")
    spacing = tuple(float(t) for t in fields.get("spacing", "1 1 1").split())
    endian = fields.get("endian", "little")
    dtype = _np_dtype(fields["dtype"], endian)
    values = _decode_payload(path.read_bytes(), dims, dtype, path)
    if "range" in fields:
        lo, hi = (float(t) for t in fields["range"].split())
        value_range = (lo, hi)
    else:
        value_range = (float(values.min()), float(values.max()))
    return Volume(dims=dims, spacing=spacing, values=values,
                  value_range=value_range, name=fields.get("name", ""))


def _read_nrrd(path: Path) -> Volume:
    blob = path.read_bytes()
    header_end = blob.find(b"\n\n")
    if not blob.startswith(b"NRRD"):
        raise FormatError(f"{path}: not an NRRD file")
    if header_end < 0:
        header_text = blob.decode("ascii", errors="replace")
        payload = b""
        detached_ok = True
    else:
        header_text = blob[:header_end].decode("ascii", errors="replace")
        payload = blob[header_end + 2:]
        detached_ok = False
    lines = header_text.splitlines()
    magic = lines[0].strip()
    if not magic.startswith("NRRD000"):
        raise FormatError(f"{path}: unsupported magic {magic!r}")
    fields = _parse_kv_lines("\n".join(lines[1:]))

    for req in ("type", "dimension", "sizes", "encoding"):
        if req not in fields:
            raise FormatError(f"{path}: missing required NRRD field '{req}'")
    if fields["dimension"] != "3":
        raise FormatError(f"{path}: only dimension 3 supported, got {fields['dimension']}")
    sizes = tuple(int(t) for t in fields["sizes"].split())
    if len(sizes) != 3:
        raise FormatError(f"{path}: sizes must have 3 entries")
    tname = fields["type"].lower()
    if tname not in _NRRD_TYPES:
        raise FormatError(f"{path}: unsupported NRRD type {fields['type']!r}")
    code = _NRRD_TYPES[tname]
    endian = fields.get("endian", "little" if _DTYPES[code].itemsize == 1 else None)
    if endian is None:
        raise FormatError(f"{path}: multi-byte type requires an 'endian' field")
    dtype = _np_dtype(code, endian)

    datafile = fields.get("data file") or fields.get("datafile")
    if datafile is not None:
        payload = (path.parent / datafile).read_bytes()
    elif detached_ok or not payload:
        raise FormatError(f"{path}: attached header without payload")

    encoding = fields["encoding"].lower()
    if encoding in ("gzip", "gz"):
        payload = gzip.decompress(payload)
    elif encoding != "raw":
        raise FormatError(f"{path}: unsupported encoding {fields['encoding']!r}")

    spacing = tuple(float(t) for t in fields.get("spacings", "1 1 1").split())
    values = _decode_payload(payload, sizes, dtype, path)
    return Volume(dims=sizes, spacing=spacing, values=values,
                  value_range=(float(values.min()), float(values.max())),
                  name=fields.get("content", ""))


def read_volume(path, format: str | None = None) -> Volume:
    """Load a volume from ``raw+meta`` or the NRRD subset.

    The format is inferred from the extension (.nrrd/.nhdr -> NRRD) unless
    given explicitly as ``"raw"`` or ``"nrrd"``.
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"no such volume file: {path}")
    if format is None:
        format = "nrrd" if path.suffix.lower() in (".nrrd", ".nhdr") else "raw"
    if format == "raw":
        return _read_raw_meta(path)
    if format == "nrrd":
        return _read_nrrd(path)
    raise FormatError(f"unknown volume format {format!r}")


def _encode_values(v: Volume, code: str, quantization: Quantization | None) -> np.ndarray:
    dt = _DTYPES[code]
    if dt.kind == "f":
        return v.values.astype(dt)
    # integer target: exact integral values pass through, otherwise a policy
    # must make the rounding explicit
    if quantization is not None:
        scaled = np.rint(v.values * quantization.scale)
    else:
        scaled = v.values
        if not np.array_equal(scaled, np.rint(scaled)):
            raise VolumeError(
                f"lossy write to integer format {code!r} without a quantization policy")
    info = np.iinfo(dt)
    if quantization is None and (scaled.min() < info.min or scaled.max() > info.max):
        raise VolumeError(
            f"values out of range for {code!r} ({info.min}..{info.max})")
    return np.clip(scaled, info.min, info.max).astype(dt)


def write_volume(v: Volume, path, format: str | None = None, dtype: str = "f64",
                 endian: str = "little", quantization: Quantization | None = None,
                 encoding: str = "raw") -> None:
    """Write a volume as raw+meta or NRRD subset.

    Float targets are always accepted (f64 is exact).  Integer targets
    require either exactly integral values or an explicit
    :class:`Quantization` policy.
    """
    path = Path(path)
    if format is None:
        format = "nrrd" if path.suffix.lower() in (".nrrd", ".nhdr") else "raw"
    if dtype not in _DTYPES:
        raise VolumeError(f"unsupported dtype {dtype!r}")
    stored = _encode_values(v, dtype, quantization)
    if quantization is not None:
        declared_range = (float(stored.min()), float(stored.max()))
    else:
        declared_range = v.value_range
    if _DTYPES[dtype].itemsize > 1:
        stored = stored.astype(stored.dtype.newbyteorder("<" if endian == "little" else ">"))
    payload = stored.tobytes()

    if format == "raw":
        lines = [
            f"dims: {v.dims[0]} {v.dims[1]} {v.dims[2]}",
            f"spacing: {v.spacing[0]!r} {v.spacing[1]!r} {v.spacing[2]!r}",
            f"dtype: {dtype}",
            f"endian: {endian}",
            f"range: {declared_range[0]!r} {declared_range[1]!r}",
        ]
        if v.name:
            lines.append(f"name: {v.name}")
        if quantization is not None:
            lines.append(f"quant_scale: {quantization.scale!r}")
        path.write_bytes(payload)
        Path(str(path) + ".meta").write_text("\n".join(lines) + "\n")
        return
    if format == "nrrd":
        if encoding == "gzip":
            payload = gzip.compress(payload, mtime=0)
        elif encoding != "raw":
            raise VolumeError(f"unsupported NRRD encoding {encoding!r}")
        header = [
            "NRRD0004",
            f"type: {_NRRD_TYPE_NAMES[dtype]}",
            "dimension: 3",
            f"sizes: {v.dims[0]} {v.dims[1]} {v.dims[2]}",
            f"spacings: {v.spacing[0]!r} {v.spacing[1]!r} {v.spacing[2]!r}",
            f"encoding: {encoding}",
        ]
        if _DTYPES[dtype].itemsize > 1:
            header.append(f"endian: {endian}")
        if v.name:
            header.append(f"content: {v.name}")
        if path.suffix.lower() == ".nhdr":
            datafile = path.with_suffix(".raw").name
            header.append(f"data file: {datafile}")
            path.write_text("\n".join(header) + "\n")
            (path.parent / datafile).write_bytes(payload)
        else:
            path.write_bytes(("\n".join(header) + "\n\n").encode("ascii") + payload)
        return
    raise VolumeError(f"unknown volume format {format!r}")


# ---------------------------------------------------------------------------
# Generic 2D grid binary (histogram counts, density, fused fields)

_GRID_MAGIC = b"TFG1"
_GRID_DTYPES = {0: np.dtype("<f4"), 1: np.dtype("<f8"), 2: np.dtype("<i4"), 3: np.dtype("<i8")}
_GRID_CODES = {v: k for k, v in _GRID_DTYPES.items()}


def pack_grid(values: np.ndarray, dtype=np.float64) -> bytes:
    """Serialize a 2D grid with a 16-byte header (magic, rows, cols, dtype)."""
    arr = np.ascontiguousarray(values, dtype=np.dtype(dtype).newbyteorder("<"))
    if arr.ndim != 2:
        raise VolumeError(f"expected a 2D grid, got shape {arr.shape}")
    code = _GRID_CODES[arr.dtype.newbyteorder("<")]
    header = (_GRID_MAGIC
              + int(arr.shape[0]).to_bytes(4, "little")
              + int(arr.shape[1]).to_bytes(4, "little")
              + bytes([code, 0, 0, 0]))
    return header + arr.tobytes()


def unpack_grid(blob: bytes) -> np.ndarray:
    if blob[:4] != _GRID_MAGIC:
        raise FormatError("not a grid payload (bad magic)")
    rows = int.from_bytes(blob[4:8], "little")
    cols = int.from_bytes(blob[8:12], "little")
    code = blob[12]
    if code not in _GRID_DTYPES:
        raise FormatError(f"unknown grid dtype code {code}")
    dt = _GRID_DTYPES[code]
    expected = 16 + rows * cols * dt.itemsize
    if len(blob) != expected:
        raise FormatError(f"size mismatch: grid payload is {len(blob)} bytes, need {expected}")
    return np.frombuffer(blob[16:], dtype=dt).reshape(rows, cols).copy()


def write_grid(values: np.ndarray, path, dtype=np.float64, meta: dict | None = None) -> None:
    """Write a binary 2D grid plus a JSON metadata sidecar."""
    path = Path(path)
    path.write_bytes(pack_grid(values, dtype=dtype))
    if meta is not None:
        doc = {"schema_version": SCHEMA_VERSION}
        doc.update(meta)
        Path(str(path) + ".json").write_text(json.dumps(doc, indent=1) + "\n")


def read_grid(path) -> tuple[np.ndarray, dict]:
    path = Path(path)
    values = unpack_grid(path.read_bytes())
    meta_path = Path(str(path) + ".json")
    meta = json.loads(meta_path.read_text()) if meta_path.exists() else {}
    if meta and meta.get("schema_version") != SCHEMA_VERSION:
        raise FormatError(f"unknown schema_version {meta.get('schema_version')} in {meta_path}")
    return values, meta


# ---------------------------------------------------------------------------
# JSON artifacts

def _graph_to_doc(graph) -> dict:
    nodes = []
    for cp in list(graph.maxima) + list(graph.saddles):
        nodes.append({"vertex": list(cp.vertex), "kind": cp.kind, "value": cp.value})
    edges = []
    for e in graph.edges:
        edges.append({
            "saddle": list(e.saddle), "maximum": list(e.maximum),
            "polyline": [list(p) for p in np.asarray(e.polyline).tolist()],
            "collapsed": bool(e.collapsed),
        })
    return {"schema": "extremum_graph", "schema_version": SCHEMA_VERSION,
            "n": graph.n, "nodes": nodes, "edges": edges}


def _path_to_doc(path_obj) -> dict:
    return {
        "schema": "tree_path", "schema_version": SCHEMA_VERSION,
        "branch_id": path_obj.branch_id,
        "nodes": [list(v) for v in path_obj.vertices],
        "kinds": list(path_obj.kinds),
        "densities": [float(d) for d in path_obj.densities],
        "polyline": [list(p) for p in np.asarray(path_obj.polyline).tolist()],
    }


def _samples_to_doc(samples, stride: int) -> dict:
    if stride < 1:
        raise VolumeError(f"stride must be >= 1, got {stride}")
    pts = np.asarray(samples.points)[::stride]
    cl = np.asarray(samples.cum_length)[::stride]
    return {
        "schema": "spline_samples", "schema_version": SCHEMA_VERSION,
        "branch_id": samples.branch_id, "stride": int(stride),
        "sample_count": int(len(samples.points)),
        "total_length": float(samples.total_length),
        "points": [[float(x), float(y)] for x, y in pts],
        "cum_length": [float(c) for c in cl],
    }


def _hist1d_to_doc(h) -> dict:
    return {
        "schema": "histogram1d", "schema_version": SCHEMA_VERSION,
        "label": h.label,
        "edges": [float(e) for e in h.edges],
        "weights": [float(w) for w in h.weights],
    }


def export_json(artifact, path, stride: int = 1) -> None:
    """Write a schema-versioned JSON document for a pipeline artifact.

    ``stride`` only applies to spline samples (decimated export).
    """
    from .topology2d import ExtremumGraph
    from .pathfind import TreePath
    from .spline import SplineSamples
    from .fusion import Histogram1D

    if isinstance(artifact, ExtremumGraph):
        doc = _graph_to_doc(artifact)
    elif isinstance(artifact, TreePath):
        doc = _path_to_doc(artifact)
    elif isinstance(artifact, SplineSamples):
        doc = _samples_to_doc(artifact, stride)
    elif isinstance(artifact, Histogram1D):
        doc = _hist1d_to_doc(artifact)
    else:
        raise VolumeError(f"cannot export artifact of type {type(artifact).__name__}")
    Path(path).write_text(json.dumps(doc, indent=1) + "\n")


def import_json(path):
    """Invert :func:`export_json`; graph and path round-trip losslessly."""
    from .topology2d import CriticalPoint, ExtremumGraph, GraphEdge
    from .pathfind import TreePath
    from .spline import SplineSamples
    from .fusion import Histogram1D

    doc = json.loads(Path(path).read_text())
    version = doc.get("schema_version")
    if version != SCHEMA_VERSION:
        raise FormatError(f"unknown schema_version {version!r} in {path}")
    schema = doc.get("schema")
    if schema == "extremum_graph":
        maxima = [CriticalPoint(tuple(n["vertex"]), n["kind"], n["value"])
                  for n in doc["nodes"] if n["kind"] == "maximum"]
        saddles = [CriticalPoint(tuple(n["vertex"]), n["kind"], n["value"])
                   for n in doc["nodes"] if n["kind"] == "saddle"]
        edges = [GraphEdge(tuple(e["saddle"]), tuple(e["maximum"]),
                           np.asarray(e["polyline"], dtype=np.int64), e["collapsed"])
                 for e in doc["edges"]]
        return ExtremumGraph(n=doc["n"], maxima=maxima, saddles=saddles, edges=edges)
    if schema == "tree_path":
        return TreePath(
            vertices=[tuple(v) for v in doc["nodes"]],
            kinds=list(doc["kinds"]),
            densities=list(doc["densities"]),
            polyline=np.asarray(doc["polyline"], dtype=np.int64),
            branch_id=doc["branch_id"])
    if schema == "spline_samples":
        return SplineSamples(
            points=np.asarray(doc["points"], dtype=np.float64),
            cum_length=np.asarray(doc["cum_length"], dtype=np.float64),
            total_length=doc["total_length"],
            branch_id=doc["branch_id"])
    if schema == "histogram1d":
        return Histogram1D(edges=np.asarray(doc["edges"], dtype=np.float64),
                           weights=np.asarray(doc["weights"], dtype=np.float64),
                           label=doc["label"])
    raise FormatError(f"unknown artifact schema {schema!r} in {path}")

import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from topofuse.volio import (FormatError, Quantization, Volume, VolumeError,
                            export_json, import_json, pack_grid, read_grid,
                            read_volume, unpack_grid, write_grid, write_volume)


def make_volume(arr, **kw):
    return Volume.from_array(np.asarray(arr, dtype=np.float64), **kw)


class TestVolumeType:
    def test_length_mismatch_rejected(self):
        with pytest.raises(VolumeError):
            Volume(dims=(2, 2, 2), spacing=(1, 1, 1), values=np.zeros(7),
                   value_range=(0, 1))

    def test_non_finite_rejected(self):
        with pytest.raises(VolumeError):
            Volume(dims=(1, 1, 2), spacing=(1, 1, 1),
                   values=np.array([0.0, np.nan]), value_range=(0, 1))

    def test_values_outside_declared_range_rejected(self):
        with pytest.raises(VolumeError):
            Volume(dims=(1, 1, 2), spacing=(1, 1, 1),
                   values=np.array([0.0, 5.0]), value_range=(0, 1))

    def test_values_read_only(self):
        v = make_volume(np.zeros((2, 2, 2)))
        with pytest.raises(ValueError):
            v.values[0] = 1.0


class TestRawMeta:
    def test_2x2x1_f32_example(self, tmp_path):
        p = tmp_path / "v.raw"
        np.array([1, 2, 3, 4], dtype="<f4").tofile(p)
        (tmp_path / "v.raw.meta").write_text(
            "dims: 2 2 1\ndtype: f32\nendian: little\n")
        v = read_volume(p)
        assert v.dims == (2, 2, 1)
        assert v.value_range == (1.0, 4.0)
        assert np.array_equal(v.values, [1, 2, 3, 4])

    def test_round_trip_f32_bit_exact(self, tmp_path):
        data = np.random.default_rng(0).random((3, 4, 5)).astype(np.float32)
        v = make_volume(data.astype(np.float64), name="probe")
        write_volume(v, tmp_path / "v.raw", dtype="f32")
        back = read_volume(tmp_path / "v.raw")
        assert back.dims == v.dims
        assert back.spacing == v.spacing
        assert back.name == "probe"
        assert np.array_equal(back.values, v.values)

    def test_payload_size_mismatch(self, tmp_path):
        p = tmp_path / "v.raw"
        p.write_bytes(b"\x00" * 100)
        (tmp_path / "v.raw.meta").write_text("dims: 4 4 4\ndtype: i16\nendian: little\n")
        with pytest.raises(FormatError, match="size mismatch"):
            read_volume(p)

    def test_missing_dims_fails(self, tmp_path):
        p = tmp_path / "v.raw"
        p.write_bytes(b"\x00" * 8)
        (tmp_path / "v.raw.meta").write_text("dtype: f64\nendian: little\n")
        with pytest.raises(FormatError, match="dims"):
            read_volume(p)

    def test_lossy_integer_write_refused(self, tmp_path):
        v = make_volume(np.random.default_rng(1).random((2, 2, 2)))
        with pytest.raises(VolumeError, match="quantization"):
            write_volume(v, tmp_path / "v.raw", dtype="u8")

    def test_quantization_policy(self, tmp_path):
        vals = np.linspace(0, 1, 8).reshape(2, 2, 2)
        v = make_volume(vals, value_range=(0, 1))
        write_volume(v, tmp_path / "v.raw", dtype="u16",
                     quantization=Quantization(scale=65535))
        back = read_volume(tmp_path / "v.raw")
        assert np.array_equal(back.values, np.rint(65535 * vals).ravel(order="F"))

    def test_missing_file(self):
        with pytest.raises(FileNotFoundError):
            read_volume("/nonexistent/volume.raw")

    def test_axis_order_preserved(self, tmp_path):
        arr = np.zeros((3, 4, 5))
        arr[1, 2, 3] = 7.0
        v = make_volume(arr)
        write_volume(v, tmp_path / "v.raw")
        back = read_volume(tmp_path / "v.raw").as_array()
        assert back[1, 2, 3] == 7.0
        assert np.count_nonzero(back) == 1


class TestNrrd:
    def test_attached_round_trip_short(self, tmp_path):
        data = np.arange(64, dtype=np.float64).reshape(4, 4, 4)
        v = make_volume(data)
        write_volume(v, tmp_path / "v.nrrd", dtype="i16")
        back = read_volume(tmp_path / "v.nrrd")
        assert back.dims == (4, 4, 4)
        assert np.array_equal(back.values, v.values)

    def test_handwritten_header(self, tmp_path):
        payload = np.arange(64, dtype="<i2").tobytes()
        blob = (b"NRRD0004\ntype: short\ndimension: 3\nsizes: 4 4 4\n"
                b"encoding: raw\nendian: little\n\n" + payload)
        (tmp_path / "v.nrrd").write_bytes(blob)
        v = read_volume(tmp_path / "v.nrrd")
        assert v.dims == (4, 4, 4)
        assert v.values[1] == 1.0

    def test_detached_header(self, tmp_path):
        v = make_volume(np.random.default_rng(2).random((3, 3, 3)))
        write_volume(v, tmp_path / "v.nhdr", dtype="f64")
        assert (tmp_path / "v.raw").exists()
        back = read_volume(tmp_path / "v.nhdr")
        assert np.array_equal(back.values, v.values)

    def test_gzip_round_trip(self, tmp_path):
        v = make_volume(np.random.default_rng(3).random((4, 3, 2)))
        write_volume(v, tmp_path / "v.nrrd", dtype="f64", encoding="gzip")
        back = read_volume(tmp_path / "v.nrrd")
        assert np.array_equal(back.values, v.values)

    def test_missing_endian_for_multibyte(self, tmp_path):
        blob = (b"NRRD0004\ntype: short\ndimension: 3\nsizes: 2 2 2\n"
                b"encoding: raw\n\n" + b"\x00" * 16)
        (tmp_path / "v.nrrd").write_bytes(blob)
        with pytest.raises(FormatError, match="endian"):
            read_volume(tmp_path / "v.nrrd")


class TestGrid:
    def test_pack_unpack(self):
        g = np.random.default_rng(4).random((5, 7))
        assert np.array_equal(unpack_grid(pack_grid(g)), g)

    def test_write_read_with_meta(self, tmp_path):
        g = np.arange(12, dtype=np.int64).reshape(3, 4)
        write_grid(g, tmp_path / "g.bin", dtype=np.int64, meta={"kind": "test"})
        back, meta = read_grid(tmp_path / "g.bin")
        assert np.array_equal(back, g)
        assert meta["kind"] == "test"

    def test_truncated_payload(self):
        blob = pack_grid(np.zeros((4, 4)))[:-8]
        with pytest.raises(FormatError, match="size mismatch"):
            unpack_grid(blob)


class TestJsonArtifacts:
    def test_unknown_schema_version(self, tmp_path):
        p = tmp_path / "a.json"
        p.write_text(json.dumps({"schema": "tree_path", "schema_version": 99}))
        with pytest.raises(FormatError, match="schema_version"):
            import_json(p)

    def test_histogram1d_round_trip(self, tmp_path):
        from topofuse.fusion import Histogram1D
        h = Histogram1D(edges=np.linspace(0, 1, 5), weights=np.array([1.0, 0, 2, 3]),
                        label="t")
        export_json(h, tmp_path / "h.json")
        back = import_json(tmp_path / "h.json")
        assert np.array_equal(back.edges, h.edges)
        assert np.array_equal(back.weights, h.weights)
        assert back.label == "t"

    def test_graph_round_trip(self, tmp_path):
        import topofuse as tf
        field = tf.generate_bump_field(
            [tf.GaussianSpec((0.3, 0.3), 0.08, 1.0),
             tf.GaussianSpec((0.7, 0.7), 0.08, 0.6)], 32)
        g = tf.extract_extremum_graph(field)
        export_json(g, tmp_path / "g.json")
        back = import_json(tmp_path / "g.json")
        assert back.maxima == g.maxima
        assert back.saddles == g.saddles
        assert len(back.edges) == len(g.edges)
        for a, b in zip(back.edges, g.edges):
            assert a.saddle == b.saddle and a.maximum == b.maximum
            assert a.collapsed == b.collapsed
            assert np.array_equal(a.polyline, b.polyline)


@st.composite
def small_volumes(draw):
    nx = draw(st.integers(1, 4))
    ny = draw(st.integers(1, 4))
    nz = draw(st.integers(1, 4))
    vals = draw(st.lists(
        st.floats(-1e6, 1e6, allow_nan=False, width=32),
        min_size=nx * ny * nz, max_size=nx * ny * nz))
    return Volume(dims=(nx, ny, nz), spacing=(1, 1, 1),
                  values=np.array(vals, dtype=np.float64),
                  value_range=(min(vals), max(vals)))


class TestRoundTripProperties:
    @given(small_volumes(), st.sampled_from(["raw", "nrrd"]))
    @settings(max_examples=40, deadline=None)
    def test_lossless_round_trip(self, v, fmt):
        import tempfile
        with tempfile.TemporaryDirectory() as tmp:
            path = f"{tmp}/v.nrrd" if fmt == "nrrd" else f"{tmp}/v.raw"
            write_volume(v, path, dtype="f64")
            back = read_volume(path)
            assert back.dims == v.dims
            assert np.array_equal(back.values, v.values)

"""Binary tensor / checkpoint format tests: layout bytes, round trips, errors."""

import io
import struct

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from factfusion.autograd import Tensor
from factfusion.tensor_io import (
    CHECKPOINT_MAGIC,
    TENSOR_MAGIC,
    FormatError,
    read_checkpoint,
    read_tensor,
    read_tensor_stream,
    tensor_bytes,
    write_checkpoint,
    write_tensor,
)


class TestTensorLayout:
    def test_exact_bytes_for_2x2(self):
        arr = np.array([[1.0, 2.0], [3.0, 4.0]], dtype=np.float32)
        blob = tensor_bytes(arr)
        expected = (
            b"PCFT"
            + struct.pack("<B", 2)
            + struct.pack("<I", 2)
            + struct.pack("<I", 2)
            + struct.pack("<4f", 1.0, 2.0, 3.0, 4.0)
        )
        assert blob == expected

    def test_row_major_payload_order(self):
        arr = np.arange(6, dtype=np.float32).reshape(2, 3)
        blob = tensor_bytes(arr)
        payload = np.frombuffer(blob[4 + 1 + 8 :], dtype="<f4")
        np.testing.assert_array_equal(payload, [0, 1, 2, 3, 4, 5])

    def test_scalar_rank_zero(self):
        blob = tensor_bytes(np.float32(7.5))
        assert blob == b"PCFT" + struct.pack("<B", 0) + struct.pack("<f", 7.5)

    def test_accepts_tensor_objects(self):
        t = Tensor.constant([1.0, 2.0])
        blob = tensor_bytes(t)
        assert blob[:4] == TENSOR_MAGIC

    def test_float64_downcast_to_f4(self):
        arr = np.array([1.5], dtype=np.float64)
        blob = tensor_bytes(arr)
        assert len(blob) == 4 + 1 + 4 + 4


class TestTensorRoundTrip:
    @pytest.mark.parametrize(
        "arr",
        [
            np.array(3.25, dtype=np.float32),
            np.array([1.0, -2.5, 1e-6], dtype=np.float32),
            np.arange(12, dtype=np.float32).reshape(3, 4),
            np.arange(24, dtype=np.float32).reshape(2, 3, 4),
            np.zeros((0,), dtype=np.float32),
            np.zeros((2, 0), dtype=np.float32),
        ],
    )
    def test_round_trip(self, tmp_path, arr):
        path = tmp_path / "t.pcft"
        write_tensor(path, arr)
        back = read_tensor(path)
        assert back.dtype == np.float32
        assert back.shape == arr.shape
        np.testing.assert_array_equal(back, arr)

    def test_round_trip_preserves_special_values(self, tmp_path):
        arr = np.array(
            [np.inf, -np.inf, 0.0, -0.0, np.finfo(np.float32).tiny],
            dtype=np.float32,
        )
        path = tmp_path / "t.pcft"
        write_tensor(path, arr)
        np.testing.assert_array_equal(read_tensor(path), arr)

    @settings(max_examples=40, deadline=None)
    @given(
        shape=st.lists(st.integers(1, 5), min_size=1, max_size=3),
        seed=st.integers(0, 2**16),
    )
    def test_round_trip_random_shapes(self, shape, seed):
        rng = np.random.default_rng(seed)
        arr = rng.standard_normal(shape).astype(np.float32)
        buf = io.BytesIO(tensor_bytes(arr))
        back = read_tensor_stream(buf)
        np.testing.assert_array_equal(back, arr)

    def test_rank_limit_enforced_on_write(self, tmp_path):
        with pytest.raises(FormatError, match="rank"):
            write_tensor(tmp_path / "bad.pcft", np.zeros((1, 1, 1, 1)))


class TestTensorErrors:
    def test_bad_magic(self, tmp_path):
        path = tmp_path / "bad.pcft"
        path.write_bytes(b"XXXX" + b"\x00" * 16)
        with pytest.raises(FormatError, match="magic"):
            read_tensor(path)

    def test_truncated_payload(self, tmp_path):
        arr = np.arange(8, dtype=np.float32)
        full = tensor_bytes(arr)
        path = tmp_path / "trunc.pcft"
        path.write_bytes(full[:-5])
        with pytest.raises(FormatError, match="truncated"):
            read_tensor(path)

    def test_excessive_rank_in_header(self, tmp_path):
        path = tmp_path / "rank.pcft"
        path.write_bytes(TENSOR_MAGIC + struct.pack("<B", 9))
        with pytest.raises(FormatError, match="rank 9"):
            read_tensor(path)


class TestCheckpoint:
    def test_round_trip_preserves_names_and_order(self, tmp_path):
        rng = np.random.default_rng(3)
        entries = {
            "embed.CT.W": rng.standard_normal((4, 3)).astype(np.float32),
            "embed.CT.b": np.zeros(3, dtype=np.float32),
            "head.Wz2": rng.standard_normal((3, 5)).astype(np.float32),
        }
        path = tmp_path / "ckpt.pcfc"
        write_checkpoint(path, entries)
        back = read_checkpoint(path)
        assert list(back.keys()) == list(entries.keys())
        for name, arr in entries.items():
            np.testing.assert_array_equal(back[name], arr)

    def test_accepts_tensor_values(self, tmp_path):
        path = tmp_path / "ckpt.pcfc"
        write_checkpoint(path, {"w": Tensor.param([[1.0, 2.0]])})
        back = read_checkpoint(path)
        np.testing.assert_array_equal(back["w"], [[1.0, 2.0]])

    def test_empty_checkpoint(self, tmp_path):
        path = tmp_path / "empty.pcfc"
        write_checkpoint(path, {})
        assert read_checkpoint(path) == {}

    def test_header_layout(self, tmp_path):
        path = tmp_path / "one.pcfc"
        write_checkpoint(path, {"ab": np.zeros(1, dtype=np.float32)})
        blob = path.read_bytes()
        assert blob[:4] == CHECKPOINT_MAGIC
        assert blob[4] == 1  # version
        assert struct.unpack("<I", blob[5:9])[0] == 1  # entry count
        assert struct.unpack("<H", blob[9:11])[0] == 2  # name length
        assert blob[11:13] == b"ab"
        assert blob[13:17] == TENSOR_MAGIC

    def test_unicode_names(self, tmp_path):
        path = tmp_path / "u.pcfc"
        write_checkpoint(path, {"pé": np.ones(2, dtype=np.float32)})
        assert "pé" in read_checkpoint(path)

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "bad.pcfc"
        path.write_bytes(b"NOPE" + b"\x00" * 10)
        with pytest.raises(FormatError, match="magic"):
            read_checkpoint(path)

    def test_unsupported_version(self, tmp_path):
        path = tmp_path / "v2.pcfc"
        path.write_bytes(CHECKPOINT_MAGIC + struct.pack("<B", 2) + struct.pack("<I", 0))
        with pytest.raises(FormatError, match="version"):
            read_checkpoint(path)

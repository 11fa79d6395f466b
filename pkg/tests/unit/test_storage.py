"""
Unit tests for ATNS tensor files, the tensor stores and adapter bundles.
"""

import struct
from pathlib import Path

import numpy as np
import pytest

from adapters.storage import (
    FileTensorStore,
    InMemoryTensorStore,
    decode_tensor,
    encode_tensor,
    load_bundle,
    read_tensor,
    save_bundle,
    write_tensor,
)
from adapters.storage.bundle import METADATA_FILE
from atoms.attention import SparseAdapter
from atoms.errors import FormatError
from atoms.rng import SplitMix64
from atoms.schemas import ActivationPolicy, TensorStorePort
from atoms.tensor import Tensor


class TestTensorFile:
    """Tests for the ATNS binary layout."""

    def test_header_layout(self) -> None:
        """Test magic, version, dtype, rank, dims and payload size."""
        blob = encode_tensor(np.arange(6, dtype=np.float32).reshape(2, 3))
        assert blob[:4] == b"ATNS"
        assert blob[4] == 1
        assert blob[5] == 0
        assert struct.unpack_from("<III", blob, 6) == (2, 2, 3)
        assert len(blob) == 18 + 6 * 4
        assert struct.unpack_from("<f", blob, 18 + 4 * 5)[0] == 5.0

    def test_decode(self) -> None:
        """Test shape, dtype and values of a decoded tensor."""
        values = np.array([[1.5, -2.0], [0.25, 3.0]], dtype=np.float32)
        decoded = decode_tensor(encode_tensor(values))
        assert decoded.dtype == np.float32
        np.testing.assert_array_equal(decoded, values)

    def test_scalar(self) -> None:
        """Test a rank-0 tensor."""
        assert decode_tensor(encode_tensor(np.float32(2.5))).shape == ()

    @pytest.mark.parametrize(
        ("offset", "byte"),
        [(0, b"X"), (4, b"\x02"), (5, b"\x07")],
    )
    def test_corrupted_header(self, offset: int, byte: bytes) -> None:
        """Test bad magic, an unknown version and an unknown dtype code."""
        blob = bytearray(encode_tensor(np.zeros(3)))
        blob[offset:offset + 1] = byte
        with pytest.raises(FormatError):
            decode_tensor(bytes(blob))

    def test_truncated(self) -> None:
        """Test short headers and a missing payload tail."""
        blob = encode_tensor(np.zeros((2, 2)))
        with pytest.raises(FormatError):
            decode_tensor(blob[:6])
        with pytest.raises(FormatError):
            decode_tensor(blob[:-1])
        with pytest.raises(FormatError):
            decode_tensor(blob + b"\x00")

    def test_file_helpers(self, tmp_path: Path) -> None:
        """Test write_tensor creating parent directories."""
        path = tmp_path / "nested" / "w.atns"
        write_tensor(path, np.ones((2, 2)))
        np.testing.assert_array_equal(read_tensor(path), np.ones((2, 2)))


class TestTensorStores:
    """Tests for both TensorStorePort implementations."""

    @pytest.fixture(params=["memory", "file"])
    def store(self, request: pytest.FixtureRequest, tmp_path: Path) -> TensorStorePort:
        if request.param == "memory":
            return InMemoryTensorStore()
        return FileTensorStore(tmp_path / "store")

    def test_is_a_port(self, store: TensorStorePort) -> None:
        """Test the protocol check."""
        assert isinstance(store, TensorStorePort)

    def test_put_get(self, store: TensorStorePort) -> None:
        """Test that stored arrays come back as float32 copies."""
        store.put("snap/base/w_q", np.arange(4.0).reshape(2, 2))
        value = store.get("snap/base/w_q")
        assert value.dtype == np.float32
        np.testing.assert_array_equal(value, [[0.0, 1.0], [2.0, 3.0]])
        value[0, 0] = 99.0
        assert store.get("snap/base/w_q")[0, 0] == 0.0

    def test_list_and_delete(self, store: TensorStorePort) -> None:
        """Test prefix listing, existence and deletion."""
        for key in ("b/x", "a/y", "a/x"):
            store.put(key, np.zeros(1))
        assert store.list_keys() == ["a/x", "a/y", "b/x"]
        assert store.list_keys("a/") == ["a/x", "a/y"]
        store.delete("a/x")
        assert not store.exists("a/x")
        assert store.exists("a/y")

    def test_missing_key(self, store: TensorStorePort) -> None:
        """Test reading an absent tensor."""
        with pytest.raises(FileNotFoundError):
            store.get("nothing")

    def test_file_store_layout(self, tmp_path: Path) -> None:
        """Test one .atns file per key and rejected escaping keys."""
        store = FileTensorStore(tmp_path)
        store.put("snapshots/base/w", np.zeros(2))
        assert (tmp_path / "snapshots" / "base" / "w.atns").is_file()
        with pytest.raises(FormatError):
            store.put("../outside", np.zeros(1))
        assert FileTensorStore(tmp_path / "absent").list_keys() == []


class TestAdapterBundle:
    """Tests for the W_s + D + metadata directory."""

    def _adapter(self, policy: ActivationPolicy, before: bool = True) -> SparseAdapter:
        rng = SplitMix64(3)
        return SparseAdapter(
            Tensor(rng.normal((4, 5))), Tensor(rng.normal((5, 3))), policy, before
        )

    def test_save_and_load(self, tmp_path: Path) -> None:
        """Test tensors, policy and form survive a bundle."""
        adapter = self._adapter(ActivationPolicy.soft_threshold(0.01))
        save_bundle(tmp_path / "bundle", adapter)
        loaded = load_bundle(tmp_path / "bundle")
        np.testing.assert_array_equal(loaded.w_s.data, adapter.w_s.data)
        np.testing.assert_array_equal(loaded.dictionary.data, adapter.dictionary.data)
        assert loaded.policy == adapter.policy
        assert loaded.apply_before_attention
        assert loaded.num_parameters() == 0

    def test_top_k_formulation(self, tmp_path: Path) -> None:
        """Test the k field and the formulation form."""
        save_bundle(tmp_path, self._adapter(ActivationPolicy.top_k(2), before=False))
        loaded = load_bundle(tmp_path, trainable=True)
        assert loaded.policy == ActivationPolicy.top_k(2)
        assert not loaded.apply_before_attention
        assert loaded.num_parameters() == 4 * 5 + 5 * 3

    def test_missing_metadata(self, tmp_path: Path) -> None:
        """Test a directory without adapter.meta."""
        with pytest.raises(FileNotFoundError):
            load_bundle(tmp_path)

    def test_contradicting_metadata(self, tmp_path: Path) -> None:
        """Test sizes in the metadata that disagree with the tensors."""
        save_bundle(tmp_path, self._adapter(ActivationPolicy.soft_threshold(0.1)))
        meta = tmp_path / METADATA_FILE
        meta.write_text(
            meta.read_text(encoding="utf-8").replace("dictionary_size=5", "dictionary_size=6"),
            encoding="utf-8",
        )
        with pytest.raises(FormatError):
            load_bundle(tmp_path)

    def test_unknown_activation(self, tmp_path: Path) -> None:
        """Test an activation name the engine does not know."""
        save_bundle(tmp_path, self._adapter(ActivationPolicy.soft_threshold(0.1)))
        meta = tmp_path / METADATA_FILE
        meta.write_text(
            meta.read_text(encoding="utf-8").replace("soft_threshold", "gelu"),
            encoding="utf-8",
        )
        with pytest.raises(FormatError):
            load_bundle(tmp_path)

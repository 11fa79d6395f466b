"""
ATNS tensor files.

Layout (all integers little-endian):

    offset  type     value
    0       4 bytes  b"ATNS"
    4       u8       format version (1)
    5       u8       dtype code (0 = float32)
    6       u32      ndim
    10      u32×ndim dims
    ...     payload  row-major float32
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np
import structlog

from atoms.errors import FormatError
from atoms.schemas import TensorStorePort

logger = structlog.get_logger(__name__)

MAGIC = b"ATNS"
FORMAT_VERSION = 1
DTYPE_F32 = 0
SUFFIX = ".atns"

_PREFIX = struct.Struct("<4sBBI")
_DTYPES = {DTYPE_F32: np.dtype("<f4")}


def encode_tensor(array: np.ndarray) -> bytes:
    values = np.asarray(array, dtype=_DTYPES[DTYPE_F32])
    header = _PREFIX.pack(MAGIC, FORMAT_VERSION, DTYPE_F32, values.ndim)
    dims = struct.pack(f"<{values.ndim}I", *values.shape)
    return header + dims + values.tobytes(order="C")


def decode_tensor(blob: bytes) -> np.ndarray:
    if len(blob) < _PREFIX.size:
        raise FormatError(f"ATNS blob too short ({len(blob)} bytes)")
    magic, version, dtype_code, ndim = _PREFIX.unpack_from(blob)
    if magic != MAGIC:
        raise FormatError(f"bad ATNS magic {magic!r}")
    if version != FORMAT_VERSION:
        raise FormatError(f"unsupported ATNS version {version}")
    if dtype_code not in _DTYPES:
        raise FormatError(f"unknown ATNS dtype code {dtype_code}")

    offset = _PREFIX.size + 4 * ndim
    if len(blob) < offset:
        raise FormatError("ATNS header truncated")
    shape = struct.unpack_from(f"<{ndim}I", blob, _PREFIX.size)
    dtype = _DTYPES[dtype_code]
    expected = int(np.prod(shape, dtype=np.int64)) * dtype.itemsize
    if len(blob) - offset != expected:
        raise FormatError(
            f"ATNS payload is {len(blob) - offset} bytes, shape {shape} needs {expected}"
        )
    values = np.frombuffer(blob, dtype=dtype, offset=offset)
    return values.reshape(shape).astype(np.float32)


def write_tensor(path: Path, array: np.ndarray) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(encode_tensor(array))


def read_tensor(path: Path) -> np.ndarray:
    return decode_tensor(path.read_bytes())


class FileTensorStore(TensorStorePort):
    """Tensors kept as one ATNS file per key under a root directory."""

    def __init__(self, root: Path) -> None:
        self._root = Path(root)

    @property
    def root(self) -> Path:
        return self._root

    def _path(self, key: str) -> Path:
        if not key or key.startswith("/") or ".." in key.split("/"):
            raise FormatError(f"invalid tensor key {key!r}")
        return self._root / f"{key}{SUFFIX}"

    def put(self, key: str, array: np.ndarray) -> None:
        write_tensor(self._path(key), array)
        logger.debug("tensor_written", key=key, shape=tuple(array.shape))

    def get(self, key: str) -> np.ndarray:
        path = self._path(key)
        if not path.exists():
            raise FileNotFoundError(f"Tensor not found: {path}")
        return read_tensor(path)

    def exists(self, key: str) -> bool:
        return self._path(key).exists()

    def list_keys(self, prefix: str = "") -> list[str]:
        if not self._root.exists():
            return []
        keys = (
            path.relative_to(self._root).as_posix()[: -len(SUFFIX)]
            for path in self._root.rglob(f"*{SUFFIX}")
        )
        return sorted(k for k in keys if k.startswith(prefix))

    def delete(self, key: str) -> None:
        self._path(key).unlink(missing_ok=True)

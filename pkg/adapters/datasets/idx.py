"""
IDX reader for the classic handwritten-digit files, plus ATNS export.

    images: u32 0x00000803, u32 count, u32 rows, u32 cols, then u8 pixels
    labels: u32 0x00000801, u32 count, then u8 labels

All header integers are big-endian. Files ending in .gz are decompressed.
"""

from __future__ import annotations

import gzip
import struct
from pathlib import Path

import numpy as np
import structlog

from adapters.storage.tensor_file import read_tensor, write_tensor
from atoms.errors import FormatError
from atoms.schemas import DigitDataset

logger = structlog.get_logger(__name__)

IMAGES_MAGIC = 0x00000803
LABELS_MAGIC = 0x00000801
LABELS_SIDECAR = "labels.txt"


def _read_bytes(path: Path) -> bytes:
    path = Path(path)
    if path.suffix == ".gz":
        with gzip.open(path, "rb") as handle:
            return handle.read()
    return path.read_bytes()


def _parse_images(blob: bytes, path: Path) -> np.ndarray:
    if len(blob) < 16:
        raise FormatError(f"{path}: too short for an IDX image header")
    magic, count, rows, cols = struct.unpack(">IIII", blob[:16])
    if magic != IMAGES_MAGIC:
        raise FormatError(f"{path}: bad image magic {magic:#010x}")
    if (rows, cols) != (28, 28):
        raise FormatError(f"{path}: expected 28×28 images, got {rows}×{cols}")
    if len(blob) - 16 != count * rows * cols:
        raise FormatError(f"{path}: payload does not hold {count} images")
    pixels = np.frombuffer(blob, dtype=np.uint8, offset=16)
    return (pixels.reshape(count, rows, cols) / 255.0).astype(np.float32)


def _parse_labels(blob: bytes, path: Path) -> np.ndarray:
    if len(blob) < 8:
        raise FormatError(f"{path}: too short for an IDX label header")
    magic, count = struct.unpack(">II", blob[:8])
    if magic != LABELS_MAGIC:
        raise FormatError(f"{path}: bad label magic {magic:#010x}")
    if len(blob) - 8 != count:
        raise FormatError(f"{path}: payload does not hold {count} labels")
    return np.frombuffer(blob, dtype=np.uint8, offset=8).astype(np.int64)


def load_idx(images_path: Path, labels_path: Path) -> DigitDataset:
    images = _parse_images(_read_bytes(images_path), Path(images_path))
    labels = _parse_labels(_read_bytes(labels_path), Path(labels_path))
    if len(images) != len(labels):
        raise FormatError(
            f"{len(images)} images but {len(labels)} labels in "
            f"{images_path} / {labels_path}"
        )
    logger.info("idx_loaded", images=str(images_path), count=len(labels))
    return DigitDataset(images, labels, source=f"idx:{Path(images_path).name}")


def write_idx(images_path: Path, labels_path: Path, dataset: DigitDataset) -> None:
    """Encode a dataset back to IDX; pixels are rounded to bytes."""
    count = len(dataset)
    pixels = np.clip(np.rint(dataset.images * 255.0), 0, 255).astype(np.uint8)
    Path(images_path).write_bytes(
        struct.pack(">IIII", IMAGES_MAGIC, count, 28, 28) + pixels.tobytes()
    )
    Path(labels_path).write_bytes(
        struct.pack(">II", LABELS_MAGIC, count) + dataset.labels.astype(np.uint8).tobytes()
    )


def export_dataset(directory: Path, dataset: DigitDataset) -> list[Path]:
    """Images as an N×28×28 ATNS tensor plus one label per line."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    images = directory / "images.atns"
    labels = directory / LABELS_SIDECAR
    write_tensor(images, dataset.images)
    labels.write_text("".join(f"{int(v)}\n" for v in dataset.labels), encoding="utf-8")
    return [images, labels]


def load_exported(directory: Path) -> DigitDataset:
    directory = Path(directory)
    images = read_tensor(directory / "images.atns")
    text = (directory / LABELS_SIDECAR).read_text(encoding="utf-8").split()
    try:
        labels = np.array([int(v) for v in text], dtype=np.int64)
    except ValueError as exc:
        raise FormatError(f"{directory / LABELS_SIDECAR}: {exc}") from exc
    if images.ndim != 3 or len(images) != len(labels):
        raise FormatError(f"{directory}: {images.shape} images for {len(labels)} labels")
    return DigitDataset(images, labels, source=f"atns:{directory.name}")

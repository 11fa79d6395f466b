"""
Procedural 28×28 digits for runs without the IDX files.

Glyphs are fixed polyline templates rasterized with a distance-to-stroke
falloff; each sample gets its own translation and stroke thickness.
"""

from __future__ import annotations

from collections.abc import Sequence

import numpy as np

from atoms.errors import ContractError
from atoms.rng import SplitMix64
from atoms.schemas import DigitDataset

IMAGE_SIZE = 28
DENOISE_STD = 0.3


def _arc(cx: float, cy: float, rx: float, ry: float, start: float, stop: float,
         points: int = 12) -> list[tuple[float, float]]:
    angles = np.linspace(np.radians(start), np.radians(stop), points)
    return [(cx + rx * np.cos(a), cy + ry * np.sin(a)) for a in angles]


# Polylines in pixel coordinates (x right, y down) on the 28×28 canvas.
STROKES: dict[int, list[list[tuple[float, float]]]] = {
    0: [_arc(14, 14, 6, 9, 0, 360, 20)],
    1: [[(11, 8), (14, 5), (14, 23)]],
    2: [[(8, 9), (10, 6), (14, 5), (18, 6), (19, 9), (18, 12), (8, 23), (20, 23)]],
    3: [[(8, 6), (13, 5), (18, 7), (18, 11), (13, 14), (18, 17), (18, 21),
         (13, 23), (8, 22)], [(11, 14), (13, 14)]],
    4: [[(17, 23), (17, 5), (7, 17), (21, 17)]],
    5: [[(19, 5), (9, 5), (8, 13), (14, 12), (19, 15), (19, 20), (14, 23), (8, 21)]],
    6: [[(18, 5), (11, 9), (8, 16), (9, 21), (14, 23), (19, 20), (18, 15),
         (13, 14), (8, 17)]],
    7: [[(7, 5), (21, 5), (12, 23)]],
    8: [_arc(14, 9, 5, 4, 0, 360, 16), _arc(14, 18, 6, 5, 0, 360, 16)],
    9: [_arc(14, 10, 5, 5, 0, 360, 16), [(19, 10), (17, 23)]],
}


def _segment_distance(px: np.ndarray, py: np.ndarray, a: tuple[float, float],
                      b: tuple[float, float]) -> np.ndarray:
    ax, ay = a
    dx, dy = b[0] - ax, b[1] - ay
    length2 = dx * dx + dy * dy
    if length2 == 0.0:
        return np.hypot(px - ax, py - ay)
    t = np.clip(((px - ax) * dx + (py - ay) * dy) / length2, 0.0, 1.0)
    return np.hypot(px - (ax + t * dx), py - (ay + t * dy))


def render_digit(label: int, shift: tuple[float, float] = (0.0, 0.0),
                 thickness: float = 1.5) -> np.ndarray:
    ys, xs = np.mgrid[0:IMAGE_SIZE, 0:IMAGE_SIZE].astype(np.float64) + 0.5
    distance = np.full((IMAGE_SIZE, IMAGE_SIZE), np.inf)
    for stroke in STROKES[label]:
        for a, b in zip(stroke[:-1], stroke[1:]):
            a_shifted = (a[0] + shift[0], a[1] + shift[1])
            b_shifted = (b[0] + shift[0], b[1] + shift[1])
            distance = np.minimum(distance, _segment_distance(xs, ys, a_shifted, b_shifted))
    return np.clip(thickness + 0.5 - distance, 0.0, 1.0).astype(np.float32)


def synth_digits(seed: int, count: int, classes: Sequence[int]) -> DigitDataset:
    """Deterministic synthetic digit images for the given classes."""
    if count < 0:
        raise ContractError(f"count must be >= 0, got {count}")
    pool = sorted(set(classes))
    if not pool or any(c not in STROKES for c in pool):
        raise ContractError(f"classes must be a non-empty subset of 0..9, got {classes}")

    rng = SplitMix64(seed)
    labels = np.array(pool, dtype=np.int64)[rng.integers(len(pool), count)]
    shifts = rng.uniform((count, 2), -2.0, 2.0)
    thickness = rng.uniform(count, 1.0, 2.0)
    images = np.zeros((count, IMAGE_SIZE, IMAGE_SIZE), dtype=np.float32)
    for i in range(count):
        images[i] = render_digit(int(labels[i]), (shifts[i, 0], shifts[i, 1]), thickness[i])
    return DigitDataset(images, labels, source="synthetic")


def add_noise(images: np.ndarray, seed: int, std: float = DENOISE_STD) -> np.ndarray:
    """Additive Gaussian corruption clipped back to [0, 1]."""
    noise = SplitMix64(seed).normal(images.shape, std=std)
    return np.clip(images + noise, 0.0, 1.0).astype(np.float32)


def check_classes(data: DigitDataset, allowed: Sequence[int]) -> None:
    extra = sorted(set(data.classes) - set(allowed))
    if extra:
        raise ContractError(f"dataset holds labels {extra} outside {sorted(allowed)}")
    if len(data) == 0:
        raise ContractError("dataset is empty")

"""
Masked reconstruction of band-limited signals.

Each target sums num_bases distinct-frequency cos or sin waves on
t = 0..length-1 with amplitudes in U(-1, 1). Frequency 0 and the Nyquist
frequency only have a cosine. Exactly mask_observed positions per row are
observed; unobserved positions read 0.
"""

from __future__ import annotations

from typing import NamedTuple

import numpy as np

from atoms.errors import ContractError
from atoms.rng import SplitMix64, derive_seed
from atoms.schemas import FourierTaskSpec


class FourierBatch(NamedTuple):
    masked: np.ndarray
    mask: np.ndarray
    target: np.ndarray


def band_frequencies(spec: FourierTaskSpec) -> np.ndarray:
    low, high = spec.freq_band
    if low < 0 or low > high or high > spec.length // 2:
        raise ContractError(f"frequency band {low}..{high} is empty or out of range")
    return np.arange(low, high + 1)


def gen_fourier_batch(spec: FourierTaskSpec, batch: int) -> FourierBatch:
    if batch < 1:
        raise ContractError(f"batch must be >= 1, got {batch}")
    frequencies = band_frequencies(spec)
    rng = SplitMix64(spec.seed)
    n = spec.length
    nyquist = n // 2 if n % 2 == 0 else -1
    t = np.arange(n, dtype=np.float64)
    picks = min(spec.num_bases, len(frequencies))

    target = np.zeros((batch, n))
    mask = np.zeros((batch, n))
    for row in range(batch):
        chosen = frequencies[rng.choice(len(frequencies), picks)]
        amplitudes = rng.uniform(picks, -1.0, 1.0)
        use_sine = rng.uniform(picks) < 0.5
        for freq, amplitude, sine in zip(chosen, amplitudes, use_sine):
            phase = 2.0 * np.pi * freq * t / n
            cosine_only = freq == 0 or freq == nyquist
            wave = np.sin(phase) if sine and not cosine_only else np.cos(phase)
            target[row] += amplitude * wave
        mask[row, rng.choice(n, spec.mask_observed)] = 1.0

    target32 = target.astype(np.float32)
    mask32 = mask.astype(np.float32)
    return FourierBatch(target32 * mask32, mask32, target32)


def stream_spec(spec: FourierTaskSpec, *labels: object) -> FourierTaskSpec:
    """Same task, different sample stream (per epoch, step or eval split)."""
    return spec.model_copy(update={"seed": derive_seed(spec.seed, *labels)})

"""
Test configuration and fixtures.
"""

from collections.abc import Callable
from pathlib import Path

import pytest

from adapters.storage.memory import InMemoryTensorStore
from app.core.settings import settings as app_settings
from atoms.rng import SplitMix64
from atoms.schemas import DigitDataset, FourierTaskSpec, TrainConfig
from atoms.tasks import DigitVae, SignalModel, synth_digits


@pytest.fixture
def settings():
    """Create test settings."""
    return app_settings


@pytest.fixture
def rng() -> SplitMix64:
    """A fixed-seed random stream."""
    return SplitMix64(1234)


@pytest.fixture
def tensor_store() -> InMemoryTensorStore:
    """Create an in-memory tensor store."""
    return InMemoryTensorStore()


@pytest.fixture
def small_spec() -> FourierTaskSpec:
    """A 16-sample signal task; the band stays below the Nyquist frequency of 8."""
    return FourierTaskSpec(length=16, num_bases=3, freq_band=(0, 6), mask_observed=4, seed=0)


@pytest.fixture
def signal_model() -> SignalModel:
    """A one-block signal model matching small_spec."""
    return SignalModel(0, length=16, num_blocks=1)


@pytest.fixture
def tiny_vae() -> DigitVae:
    """A digit VAE small enough for the fast suite."""
    return DigitVae(0, dim=16, heads=2, latent=4, depth=1)


@pytest.fixture
def train_config() -> TrainConfig:
    """Two short epochs on tiny batches."""
    return TrainConfig(
        epochs=2,
        batch_size=4,
        steps_per_epoch=2,
        eval_size=8,
        dictionary_size=8,
        lam=0.01,
        lr=1e-2,
    )


@pytest.fixture
def digits_59() -> DigitDataset:
    """Twenty synthetic digits from the pre-training classes."""
    return synth_digits(0, 20, (5, 6, 7, 8, 9))


@pytest.fixture
def digits_3() -> DigitDataset:
    """Twenty synthetic threes."""
    return synth_digits(1, 20, (3,))


@pytest.fixture
def write_config(tmp_path: Path) -> Callable[..., Path]:
    """Write a KEY=value config file and return its path."""

    def _write(name: str, **values: object) -> Path:
        path = tmp_path / f"{name}.cfg"
        lines = [f"{key}={value}" for key, value in values.items()]
        path.write_text("\n".join(lines) + "\n", encoding="utf-8")
        return path

    return _write

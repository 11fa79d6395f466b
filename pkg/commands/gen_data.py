"""
gen-data: synthetic Fourier batches or digits written as ATNS tensors.
"""

from __future__ import annotations

from pathlib import Path
from typing import Any, Literal

import structlog
from pydantic import Field, field_validator, model_validator

from adapters.datasets import export_dataset
from adapters.storage import write_tensor
from atoms.schemas import FourierTaskSpec
from atoms.tasks import add_noise, gen_fourier_batch, synth_digits
from commands.base import (
    CommandConfig,
    CommandContext,
    CommandDefinition,
    CommandHandler,
    CommandResult,
    parse_band,
)

logger = structlog.get_logger(__name__)


def parse_classes(value: Any) -> Any:
    """'5..9' is an inclusive range, '3,8' a list."""
    if isinstance(value, str):
        text = value.strip()
        if ".." in text:
            low, high = (int(part) for part in text.split("..", 1))
            return tuple(range(low, high + 1))
        return tuple(int(part) for part in text.split(",") if part.strip())
    return value


class GenDataConfig(CommandConfig):
    kind: Literal["fourier", "digits"] = "fourier"
    count: int = Field(256, ge=0)
    length: int = Field(64, ge=2)
    num_bases: int = Field(5, ge=1)
    freq_band: tuple[int, int] = (0, 24)
    mask_observed: int = Field(16, ge=1)
    classes: tuple[int, ...] = tuple(range(10))
    noise_std: float = Field(0.3, ge=0)

    _parse_band = field_validator("freq_band", mode="before")(parse_band)
    _parse_classes = field_validator("classes", mode="before")(parse_classes)

    @field_validator("classes")
    @classmethod
    def _check_classes(cls, value: tuple[int, ...]) -> tuple[int, ...]:
        if not value or any(not 0 <= c <= 9 for c in value):
            raise ValueError(f"classes must be a non-empty subset of 0..9, got {value}")
        return value

    @model_validator(mode="after")
    def _check_spec(self) -> GenDataConfig:
        self.spec()
        return self

    def spec(self) -> FourierTaskSpec:
        return FourierTaskSpec(
            length=self.length,
            num_bases=self.num_bases,
            freq_band=self.freq_band,
            mask_observed=self.mask_observed,
            seed=self.seed,
        )


class GenDataHandler(CommandHandler):
    def execute(self, config: GenDataConfig, context: CommandContext) -> CommandResult:
        logger.info("gen_data_invoked", kind=config.kind, count=config.count)
        if config.count == 0:
            return CommandResult.success([], kind=config.kind, count=0)
        if config.kind == "fourier":
            outputs = self._fourier(config, context.out_dir)
        else:
            outputs = self._digits(config, context.out_dir)
        return CommandResult.success(outputs, kind=config.kind, count=config.count)

    def _fourier(self, config: GenDataConfig, out_dir: Path) -> list[Path]:
        batch = gen_fourier_batch(config.spec(), config.count)
        outputs = []
        for name, array in batch._asdict().items():
            path = out_dir / f"{name}.atns"
            write_tensor(path, array)
            outputs.append(path)
        return outputs

    def _digits(self, config: GenDataConfig, out_dir: Path) -> list[Path]:
        data = synth_digits(config.seed, config.count, config.classes)
        outputs = export_dataset(out_dir, data)
        if config.noise_std > 0:
            noisy = out_dir / "noisy.atns"
            write_tensor(noisy, add_noise(data.images, config.seed, config.noise_std))
            outputs.append(noisy)
        return outputs


gen_data_command = CommandDefinition(
    name="gen-data",
    description="Write synthetic Fourier batches or digits as ATNS tensors.",
    config_model=GenDataConfig,
)

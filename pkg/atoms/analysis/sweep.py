"""Density (ρ) and dictionary-size (M) sweeps on the signal transfer task."""

from __future__ import annotations

from collections.abc import Sequence
from typing import Literal

import structlog

from atoms.errors import ContractError
from atoms.schemas import (
    ActivationKind,
    FourierTaskSpec,
    FreezePolicy,
    SweepRow,
    TrainConfig,
)
from atoms.tasks import SignalModel, gen_fourier_batch, stream_spec
from atoms.tensor import no_grad
from atoms.training import evaluate_signal, finetune_signal

logger = structlog.get_logger(__name__)

SweepAxis = Literal["rho", "M"]
TRANSFER_BAND = (20, 28)


def point_config(base_cfg: TrainConfig, axis: SweepAxis, value: float) -> TrainConfig:
    if axis == "rho":
        return base_cfg.model_copy(update={
            "activation": ActivationKind.TOP_K,
            "density_target": float(value),
            "k": None,
        })
    if axis == "M":
        if value < 1 or int(value) != value:
            raise ContractError(f"dictionary size must be a positive integer, got {value}")
        return base_cfg.model_copy(update={"dictionary_size": int(value)})
    raise ContractError(f"unknown sweep axis {axis!r}; use 'rho' or 'M'")


def ablation_sweep(
    axis: SweepAxis,
    values: Sequence[float],
    base_cfg: TrainConfig,
    pretrained: SignalModel,
    spec_high: FourierTaskSpec,
    transfer_band: tuple[int, int] = TRANSFER_BAND,
) -> list[SweepRow]:
    """
    Fine-tune a fresh copy of the pre-trained model per value.

    eval_loss is measured on spec_high; transfer_loss on the shifted
    transfer_band. Trends are reported, not enforced.
    """
    if not values:
        raise ContractError("a sweep needs at least one value")

    rows = []
    for value in values:
        cfg = point_config(base_cfg, axis, value)
        model = pretrained.copy()
        report = finetune_signal(spec_high, model, cfg.adapter, FreezePolicy.BOTH, cfg)
        transfer_batch = gen_fourier_batch(
            stream_spec(spec_high.with_band(*transfer_band), "transfer"), cfg.eval_size
        )
        with no_grad():
            transfer = evaluate_signal(model, transfer_batch).loss
        row = SweepRow(
            axis_value=float(value),
            eval_loss=report.final_eval_loss,
            transfer_loss=transfer,
            density=report.history[-1].density if report.history else 0.0,
        )
        rows.append(row)
        logger.info("sweep_point_completed", axis=axis, **vars(row))
    return rows

"""
Pre-train → fine-tune protocols for the two toy tasks.

Signal epochs draw steps_per_epoch fresh batches from the task generator;
VAE epochs make one shuffled pass over the training split. Evaluation
always uses a fixed held-out set so loss curves are comparable.
"""

from __future__ import annotations

import dataclasses
import math
from collections.abc import Sequence

import numpy as np
import structlog

from atoms.attention import SparseAdapter
from atoms.errors import ContractError
from atoms.rng import SplitMix64, derive_seed
from atoms.schemas import (
    AdapterConfig,
    DigitDataset,
    FourierTaskSpec,
    FreezePolicy,
    RunReport,
    TensorStorePort,
    TrainConfig,
)
from atoms.sparse import ortho_penalty
from atoms.tasks import (
    DigitVae,
    FourierBatch,
    SignalModel,
    add_noise,
    check_classes,
    gen_fourier_batch,
    stream_spec,
    vae_forward,
)
from atoms.tensor import Module, Tensor, no_grad
from atoms.training.harness import (
    Evaluation,
    TrainingLoop,
    apply_freeze_policy,
    save_snapshot,
)

logger = structlog.get_logger(__name__)

LOW_BAND = (0, 24)
PRETRAIN_CLASSES = (5, 6, 7, 8, 9)
FINETUNE_CLASSES = (3,)
WARMUP_STAGE = "finetune_signal_warmup"


def signal_loss(prediction: Tensor, target: np.ndarray) -> Tensor:
    """MSE over all positions, observed or not."""
    diff = prediction - target
    return (diff * diff).mean()


def _with_ortho(loss: Tensor, adapters: Sequence[SparseAdapter], weight: float) -> Tensor:
    if weight <= 0:
        return loss
    for adapter in adapters:
        loss = loss + ortho_penalty(adapter.dictionary) * weight
    return loss


def evaluate_signal(model: SignalModel, batch: FourierBatch,
                    context: np.ndarray | None = None) -> Evaluation:
    out = model.forward(batch.masked, batch.mask, context)
    codes = out.coefficients or out.block_codes
    return Evaluation(
        signal_loss(out.prediction, batch.target).item(),
        tuple(c.numpy() for c in codes),
    )


def _adapter_state(model: Module) -> dict[str, np.ndarray]:
    return {
        name: value for name, value in model.state_dict().items()
        if name.startswith("adapters.")
    }


def _finish(report: RunReport, store: TensorStorePort | None, prefix: str,
            state: dict[str, np.ndarray], **extra: float) -> RunReport:
    ref = None
    if store is not None and not report.diverged:
        ref = save_snapshot(store, prefix, state)
    return dataclasses.replace(
        report, snapshot_ref=ref, extra={**dict(report.extra), **extra}
    )


# =============================================================================
# SIGNAL TASK
# =============================================================================

def pretrain_signal(
    spec_low: FourierTaskSpec,
    model: SignalModel,
    cfg: TrainConfig,
    store: TensorStorePort | None = None,
) -> RunReport:
    """Train the whole model (minus the frozen projection) on the low band."""
    if model.adapters or model.lowrank:
        raise ContractError("pre-training runs on a model without adapters")
    if spec_low.freq_band != LOW_BAND:
        logger.warning("pretrain_band_differs", band=spec_low.freq_band, expected=LOW_BAND)

    eval_batch = gen_fourier_batch(stream_spec(spec_low, "eval"), cfg.eval_size)

    def step(epoch: int, index: int) -> Tensor:
        batch = gen_fourier_batch(
            stream_spec(spec_low, "train", epoch, index), cfg.batch_size
        )
        out = model.forward(batch.masked, batch.mask)
        loss = signal_loss(out.prediction, batch.target)
        return _with_ortho(loss, model.sparse_blocks, cfg.ortho_weight)

    report = TrainingLoop(
        "pretrain_signal",
        model.parameters(),
        cfg,
        step,
        lambda: evaluate_signal(model, eval_batch),
    ).run()
    return _finish(report, store, "pretrain_signal", model.base_state())


def _train_signal_adapters(
    stage: str,
    model: SignalModel,
    spec: FourierTaskSpec,
    cfg: TrainConfig,
) -> RunReport:
    eval_batch = gen_fourier_batch(stream_spec(spec, "eval"), cfg.eval_size)

    def step(epoch: int, index: int) -> Tensor:
        batch = gen_fourier_batch(stream_spec(spec, stage, epoch, index), cfg.batch_size)
        out = model.forward(batch.masked, batch.mask)
        loss = signal_loss(out.prediction, batch.target)
        return _with_ortho(loss, model.adapters, cfg.ortho_weight)

    return TrainingLoop(
        stage,
        model.parameters(),
        cfg,
        step,
        lambda: evaluate_signal(model, eval_batch),
    ).run()


def warmup_signal_adapters(
    spec_warm: FourierTaskSpec,
    pretrained: SignalModel,
    adapter_cfg: AdapterConfig,
    cfg: TrainConfig,
    store: TensorStorePort | None = None,
) -> RunReport:
    """
    Attach fresh adapters and train atoms and coefficients together on
    spec_warm, so a later coefficient-only run starts from non-zero atoms.
    """
    if pretrained.adapters:
        raise ContractError("warm-up attaches its own adapters")
    pretrained.freeze()
    adapters = pretrained.attach_adapters(adapter_cfg, derive_seed(cfg.seed, "adapters"))
    apply_freeze_policy(adapters, FreezePolicy.BOTH)
    report = _train_signal_adapters(WARMUP_STAGE, pretrained, spec_warm, cfg)
    return _finish(report, store, WARMUP_STAGE, _adapter_state(pretrained))


def finetune_signal(
    spec_high: FourierTaskSpec,
    pretrained: SignalModel,
    adapter_cfg: AdapterConfig,
    policy: FreezePolicy,
    cfg: TrainConfig,
    store: TensorStorePort | None = None,
) -> RunReport:
    """
    Freeze the base model and train the parameters the policy allows on the
    new band.

    A model coming out of warmup_signal_adapters keeps its adapters and
    adapter_cfg is ignored; otherwise one fresh adapter is attached per block.
    The frozen side of every adapter stays bit-identical for the whole run.
    """
    pretrained.freeze()
    if pretrained.adapters:
        adapters = pretrained.adapters
        logger.info("adapters_warm_started", adapters=len(adapters))
    else:
        adapters = pretrained.attach_adapters(
            adapter_cfg, derive_seed(cfg.seed, "adapters")
        )
    apply_freeze_policy(adapters, policy)
    logger.info("freeze_policy_applied", policy=policy.value, adapters=len(adapters))

    eval_batch = gen_fourier_batch(stream_spec(spec_high, "eval"), cfg.eval_size)
    with no_grad():
        base_loss = evaluate_signal(pretrained.copy(), eval_batch).loss
    report = _train_signal_adapters("finetune_signal", pretrained, spec_high, cfg)
    return _finish(
        report, store, "finetune_signal", _adapter_state(pretrained),
        pretrained_eval_loss=base_loss,
    )


# =============================================================================
# DIGIT TASK
# =============================================================================

def split_holdout(data: DigitDataset, eval_size: int) -> tuple[DigitDataset, DigitDataset]:
    """Last min(eval_size, N // 5) samples are held out for evaluation."""
    if len(data) < 2:
        raise ContractError("need at least two images to hold out an eval split")
    held = max(1, min(eval_size, len(data) // 5))
    cut = len(data) - held
    train = DigitDataset(data.images[:cut], data.labels[:cut], data.source)
    holdout = DigitDataset(data.images[cut:], data.labels[cut:], data.source)
    return train, holdout


class _EpochOrder:
    def __init__(self, size: int, seed: int) -> None:
        self._size = size
        self._seed = seed
        self._cache: dict[int, np.ndarray] = {}

    def __call__(self, epoch: int) -> np.ndarray:
        if epoch not in self._cache:
            self._cache = {
                epoch: SplitMix64(derive_seed(self._seed, "order", epoch)).choice(
                    self._size, self._size
                )
            }
        return self._cache[epoch]


def _vae_eval(vae: DigitVae, noisy: np.ndarray, clean: np.ndarray) -> Evaluation:
    out = vae_forward(vae, noisy, 0, target=clean, sample=False)
    return Evaluation(
        out.elbo_parts.reconstruction.item(),
        tuple(c.numpy() for c in out.coefficients),
    )


def _train_vae(
    stage: str,
    vae: DigitVae,
    data: DigitDataset,
    cfg: TrainConfig,
    kl_weight: float,
) -> tuple[RunReport, np.ndarray, np.ndarray]:
    train, holdout = split_holdout(data, cfg.eval_size)
    eval_noisy = add_noise(
        holdout.images, derive_seed(cfg.seed, stage, "eval_noise"), cfg.noise_std
    )
    order = _EpochOrder(len(train), derive_seed(cfg.seed, stage))
    batch = min(cfg.batch_size, len(train))
    steps = math.ceil(len(train) / batch)

    def step(epoch: int, index: int) -> Tensor:
        rows = order(epoch)[index * batch:(index + 1) * batch]
        clean = train.images[rows]
        noisy = add_noise(clean, derive_seed(cfg.seed, stage, "noise", epoch, index), cfg.noise_std)
        out = vae_forward(
            vae, noisy, derive_seed(cfg.seed, stage, "latent", epoch, index), target=clean
        )
        loss = out.elbo_parts.reconstruction
        if kl_weight > 0:
            loss = loss + out.elbo_parts.kl * kl_weight
        return _with_ortho(loss, vae.adapters, cfg.ortho_weight)

    report = TrainingLoop(
        stage,
        vae.parameters(),
        cfg,
        step,
        lambda: _vae_eval(vae, eval_noisy, holdout.images),
        steps_per_epoch=steps,
    ).run()
    return report, eval_noisy, holdout.images


def pretrain_vae(
    data_59: DigitDataset,
    vae: DigitVae,
    cfg: TrainConfig,
    store: TensorStorePort | None = None,
) -> RunReport:
    """Denoising ELBO training on digits 5..9."""
    check_classes(data_59, PRETRAIN_CLASSES)
    if vae.adapters:
        raise ContractError("pre-training runs on a VAE without adapters")
    report, _, _ = _train_vae("pretrain_vae", vae, data_59, cfg, cfg.kl_weight)
    return _finish(report, store, "pretrain_vae", vae.base_state())


def finetune_vae_dictionary(
    data_3: DigitDataset,
    vae: DigitVae,
    m: int,
    cfg: TrainConfig,
    store: TensorStorePort | None = None,
) -> RunReport:
    """Freeze the VAE and learn one M-atom dictionary per decoder attention layer."""
    check_classes(data_3, FINETUNE_CLASSES)
    vae.freeze()
    adapter_cfg = cfg.adapter.model_copy(update={"dictionary_size": m})
    adapters = vae.attach_adapters(adapter_cfg, derive_seed(cfg.seed, "adapters"))
    apply_freeze_policy(adapters, FreezePolicy.BOTH)

    report, eval_noisy, eval_clean = _train_vae(
        "finetune_vae_dictionary", vae, data_3, cfg, kl_weight=0.0
    )
    state = _adapter_state(vae)
    with no_grad():
        final_codes = _vae_eval(vae, eval_noisy, eval_clean).coefficients
    for layer, codes in enumerate(final_codes):
        state[f"coefficients.{layer}"] = codes
    return _finish(
        report, store, "finetune_vae_dictionary", state,
        frozen_eval_loss=report.initial_eval_loss,
    )

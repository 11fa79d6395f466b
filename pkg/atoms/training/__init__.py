from atoms.training.harness import (
    Evaluation,
    TrainingLoop,
    apply_freeze_policy,
    load_snapshot,
    save_snapshot,
    summarize_coefficients,
)
from atoms.training.optim import Adam, AdamHyper, AdamState, adam_step, clip_grad_norm
from atoms.training.protocols import (
    LOW_BAND,
    WARMUP_STAGE,
    evaluate_signal,
    finetune_signal,
    finetune_vae_dictionary,
    pretrain_signal,
    pretrain_vae,
    signal_loss,
    split_holdout,
    warmup_signal_adapters,
)

__all__ = [
    "LOW_BAND",
    "WARMUP_STAGE",
    "Adam",
    "AdamHyper",
    "AdamState",
    "Evaluation",
    "TrainingLoop",
    "adam_step",
    "apply_freeze_policy",
    "clip_grad_norm",
    "evaluate_signal",
    "finetune_signal",
    "finetune_vae_dictionary",
    "load_snapshot",
    "pretrain_signal",
    "pretrain_vae",
    "save_snapshot",
    "signal_loss",
    "split_holdout",
    "summarize_coefficients",
    "warmup_signal_adapters",
]

"""
Rank-1 stability duel.

A pre-trained signal model with a context table is fine-tuned twice on one
fixed high-band signal under a one-hot training context: once with sparse
adapters restricted to a single active atom (TopK k=1), once with rank-1
low-rank adapters on W_v. Both are then probed with slightly perturbed
contexts. Reported per method: training loss, probe losses and the variance
of the adapter coefficients across contexts.
"""

from __future__ import annotations

import numpy as np
import structlog

from atoms.errors import ContractError
from atoms.rng import SplitMix64, derive_seed
from atoms.schemas import ActivationKind, DuelReport, FourierTaskSpec, TrainConfig
from atoms.sparse import NONZERO_THRESHOLD, ortho_penalty
from atoms.tasks import FourierBatch, SignalModel, gen_fourier_batch, stream_spec
from atoms.tensor import Tensor, no_grad
from atoms.training import Evaluation, TrainingLoop, signal_loss

logger = structlog.get_logger(__name__)

SPARSE = "sparse"
LOWRANK = "lowrank"


def _context_losses(model: SignalModel, sample: FourierBatch,
                    contexts: list[np.ndarray]) -> tuple[list[float], list[list[np.ndarray]]]:
    losses, codes = [], []
    with no_grad():
        for context in contexts:
            out = model.forward(sample.masked, sample.mask, context)
            losses.append(signal_loss(out.prediction, sample.target).item())
            codes.append([c.numpy() for c in out.coefficients])
    return losses, codes


def _coefficient_noise(codes: list[list[np.ndarray]]) -> float:
    """Mean over entries of the variance across contexts, pooled over layers."""
    per_layer = [np.stack([ctx[i] for ctx in codes]) for i in range(len(codes[0]))]
    return float(np.mean([layer.var(axis=0).mean() for layer in per_layer]))


def _train(method: str, model: SignalModel, sample: FourierBatch,
           context: np.ndarray, cfg: TrainConfig) -> float:
    def step(epoch: int, index: int) -> Tensor:
        out = model.forward(sample.masked, sample.mask, context)
        loss = signal_loss(out.prediction, sample.target)
        for adapter in model.adapters:
            loss = loss + ortho_penalty(adapter.dictionary) * cfg.ortho_weight
        return loss

    def evaluate() -> Evaluation:
        out = model.forward(sample.masked, sample.mask, context)
        return Evaluation(signal_loss(out.prediction, sample.target).item())

    report = TrainingLoop(f"duel_{method}", model.parameters(), cfg, step, evaluate).run()
    return report.final_eval_loss


def stability_duel(
    pretrained: SignalModel,
    target_spec: FourierTaskSpec,
    cfg: TrainConfig,
    num_probes: int = 5,
    perturbation: float = 0.1,
) -> DuelReport:
    if pretrained.context is None:
        raise ContractError("the duel needs a model built with a context table")
    if num_probes < 1:
        raise ContractError("the duel needs at least one probe context")

    vocab = pretrained.context.shape[0]
    sample = gen_fourier_batch(stream_spec(target_spec, "duel", cfg.seed), 1)
    train_context = np.zeros(vocab, dtype=np.float32)
    train_context[0] = 1.0
    rng = SplitMix64(derive_seed(cfg.seed, "duel_probes"))
    probes = [
        (train_context + perturbation * rng.normal(vocab)).astype(np.float32)
        for _ in range(num_probes)
    ]

    sparse_model = pretrained.copy().freeze()
    sparse_cfg = cfg.adapter.model_copy(
        update={"activation": ActivationKind.TOP_K, "k": 1, "density_target": None}
    )
    sparse_model.attach_adapters(sparse_cfg, derive_seed(cfg.seed, "duel", SPARSE))
    lowrank_model = pretrained.copy().freeze()
    lowrank_model.attach_lowrank(1, ("v",), derive_seed(cfg.seed, "duel", LOWRANK))

    train_loss: dict[str, float] = {}
    probe_losses: dict[str, tuple[float, ...]] = {}
    noise: dict[str, float] = {}
    support_ok = True
    for method, model in ((SPARSE, sparse_model), (LOWRANK, lowrank_model)):
        train_loss[method] = _train(method, model, sample, train_context, cfg)
        losses, codes = _context_losses(model, sample, [train_context, *probes])
        probe_losses[method] = tuple(losses[1:])
        noise[method] = _coefficient_noise(codes)
        if method == SPARSE:
            support_ok = all(
                int(np.max(np.count_nonzero(np.abs(layer) > NONZERO_THRESHOLD, axis=-1))) <= 1
                for ctx in codes for layer in ctx
            )

    logger.info(
        "stability_duel_completed",
        seed=cfg.seed,
        train_loss=train_loss,
        mean_probe_loss={m: float(np.mean(v)) for m, v in probe_losses.items()},
        support_ok=support_ok,
    )
    return DuelReport(
        seed=cfg.seed,
        train_loss=train_loss,
        probe_losses=probe_losses,
        coefficient_noise=noise,
        support_ok=support_ok,
    )

"""
Generic epoch loop shared by every training protocol.

A protocol supplies a step function (returns the loss tensor for one
mini-batch) and an evaluation function; the loop owns backward, clipping,
the optimizer, per-epoch records and divergence handling.
"""

from __future__ import annotations

from collections.abc import Callable, Mapping, Sequence
from typing import NamedTuple

import numpy as np
import structlog

from atoms.attention import SparseAdapter
from atoms.errors import ContractError, NumericError
from atoms.schemas import (
    EpochRecord,
    FreezePolicy,
    RunReport,
    TensorStorePort,
    TrainConfig,
)
from atoms.sparse import atom_usage, density
from atoms.tensor import Tensor, backward, no_grad
from atoms.training.optim import Adam

logger = structlog.get_logger(__name__)


class Evaluation(NamedTuple):
    loss: float
    coefficients: tuple[np.ndarray, ...] = ()


StepFn = Callable[[int, int], Tensor]
EvalFn = Callable[[], Evaluation]


def apply_freeze_policy(adapters: Sequence[SparseAdapter], policy: FreezePolicy) -> None:
    if policy is FreezePolicy.FULL_MODEL:
        raise ContractError("FULL_MODEL is a pre-training policy, not an adapter policy")
    for adapter in adapters:
        adapter.set_trainable(
            atoms=policy.trains_atoms, coefficients=policy.trains_coefficients
        )


def summarize_coefficients(
    coefficients: Sequence[np.ndarray],
) -> tuple[float, int, tuple[int, ...]]:
    """Pooled density, active atom count and per-atom usage over all layers."""
    if not coefficients:
        return 0.0, 0, ()
    total = sum(c.size for c in coefficients)
    nonzero = sum(density(c) * c.size for c in coefficients)
    usage = np.concatenate([atom_usage(c) for c in coefficients])
    return (
        float(nonzero / total) if total else 0.0,
        int(np.count_nonzero(usage)),
        tuple(int(u) for u in usage),
    )


def save_snapshot(store: TensorStorePort, prefix: str, state: Mapping[str, np.ndarray]) -> str:
    for name, array in state.items():
        store.put(f"{prefix}/{name}", array)
    logger.info("snapshot_saved", prefix=prefix, tensors=len(state))
    return prefix


def load_snapshot(store: TensorStorePort, prefix: str) -> dict[str, np.ndarray]:
    keys = store.list_keys(f"{prefix}/")
    return {key[len(prefix) + 1:]: store.get(key) for key in keys}


class TrainingLoop:
    def __init__(
        self,
        stage: str,
        params: Mapping[str, Tensor],
        cfg: TrainConfig,
        train_step: StepFn,
        evaluate: EvalFn,
        steps_per_epoch: int | None = None,
        epochs: int | None = None,
    ) -> None:
        self.stage = stage
        self.params = dict(params)
        self.cfg = cfg
        self.train_step = train_step
        self.evaluate = evaluate
        self.steps_per_epoch = steps_per_epoch or cfg.steps_per_epoch
        self.epochs = cfg.epochs if epochs is None else epochs

    def _evaluate(self) -> Evaluation:
        with no_grad():
            return self.evaluate()

    def run(self) -> RunReport:
        log = logger.bind(stage=self.stage, seed=self.cfg.seed)
        initial = self._evaluate()
        trainable = sum(p.size for p in self.params.values())
        log.info(
            "training_started",
            epochs=self.epochs,
            steps_per_epoch=self.steps_per_epoch,
            trainable_parameters=trainable,
            initial_eval_loss=initial.loss,
        )

        history: list[EpochRecord] = []
        diverged = False
        if self.epochs > 0:
            optimizer = Adam.from_config(self.params, self.cfg)
            try:
                for epoch in range(1, self.epochs + 1):
                    losses = []
                    for step in range(self.steps_per_epoch):
                        loss = self.train_step(epoch, step)
                        backward(loss)
                        optimizer.step()
                        optimizer.zero_grad()
                        losses.append(loss.item())
                    result = self._evaluate()
                    share, active, usage = summarize_coefficients(result.coefficients)
                    record = EpochRecord(
                        epoch=epoch,
                        train_loss=float(np.mean(losses)),
                        eval_loss=result.loss,
                        density=share,
                        active_atoms=active,
                        atom_usage=usage,
                    )
                    history.append(record)
                    log.info(
                        "epoch_completed",
                        epoch=epoch,
                        train_loss=record.train_loss,
                        eval_loss=record.eval_loss,
                        density=record.density,
                    )
            except NumericError as exc:
                diverged = True
                log.error("run_diverged", epoch=len(history) + 1, error=str(exc))

        final = history[-1].eval_loss if history else initial.loss
        log.info("training_finished", final_eval_loss=final, diverged=diverged)
        return RunReport(
            stage=self.stage,
            seed=self.cfg.seed,
            history=tuple(history),
            initial_eval_loss=initial.loss,
            final_eval_loss=final,
            trainable_parameters=trainable,
            diverged=diverged,
        )

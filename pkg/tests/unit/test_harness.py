"""
Unit tests for the shared epoch loop, freeze policies and snapshots.
"""

import numpy as np
import pytest

from adapters.storage.memory import InMemoryTensorStore
from atoms.attention import SparseAdapter
from atoms.errors import ContractError, NumericError
from atoms.rng import SplitMix64
from atoms.schemas import AdapterConfig, FreezePolicy, TrainConfig
from atoms.tensor import Tensor
from atoms.tensor.core import is_grad_enabled
from atoms.training import (
    Evaluation,
    TrainingLoop,
    apply_freeze_policy,
    load_snapshot,
    save_snapshot,
    summarize_coefficients,
)


def _quadratic_loop(cfg: TrainConfig, fail_at: int | None = None) -> tuple[TrainingLoop, Tensor]:
    x = Tensor([0.0, 4.0], requires_grad=True)

    def step(epoch: int, _step: int) -> Tensor:
        if fail_at is not None and epoch == fail_at:
            raise NumericError("loss became nan")
        diff = x - 1.0
        return (diff * diff).sum()

    def evaluate() -> Evaluation:
        assert not is_grad_enabled()
        diff = x.data.astype(np.float64) - 1.0
        return Evaluation(float((diff * diff).sum()), (np.array([[0.0, 1.0]]),))

    return TrainingLoop("quadratic", {"x": x}, cfg, step, evaluate), x


class TestFreezePolicy:
    """Tests for mapping a policy onto adapter flags."""

    @pytest.mark.parametrize(
        ("policy", "expected"),
        [
            (FreezePolicy.ATOMS_ONLY, ["dictionary"]),
            (FreezePolicy.COEFFICIENTS_ONLY, ["w_s"]),
            (FreezePolicy.BOTH, ["w_s", "dictionary"]),
        ],
    )
    def test_trainable_sets(self, rng: SplitMix64, policy: FreezePolicy,
                            expected: list[str]) -> None:
        """Test which adapter tensors stay trainable."""
        adapters = [SparseAdapter.initialize(rng, 4, 4, AdapterConfig(dictionary_size=3))
                    for _ in range(2)]
        apply_freeze_policy(adapters, policy)
        for adapter in adapters:
            assert list(adapter.parameters()) == expected

    def test_full_model_rejected(self, rng: SplitMix64) -> None:
        """Test that FULL_MODEL is not an adapter policy."""
        adapter = SparseAdapter.initialize(rng, 4, 4, AdapterConfig(dictionary_size=3))
        with pytest.raises(ContractError):
            apply_freeze_policy([adapter], FreezePolicy.FULL_MODEL)


class TestSummaries:
    """Tests for pooled coefficient statistics."""

    def test_empty(self) -> None:
        """Test a run without adapters."""
        assert summarize_coefficients([]) == (0.0, 0, ())

    def test_pooled_over_layers(self) -> None:
        """Test density and usage across two layers."""
        first = np.array([[1.0, 0.0], [0.0, 0.0]])
        second = np.array([[0.0, 2.0], [0.0, 3.0]])
        share, active, usage = summarize_coefficients([first, second])
        assert share == pytest.approx(3 / 8)
        assert active == 2
        assert usage == (1, 0, 0, 2)


class TestSnapshots:
    """Tests for prefix-scoped parameter snapshots."""

    def test_round_trip(self, tensor_store: InMemoryTensorStore) -> None:
        """Test that a saved state loads back under the same names."""
        state = {"blocks.0.w_q": np.ones((2, 2)), "positional": np.arange(3.0)}
        assert save_snapshot(tensor_store, "pretrain", state) == "pretrain"
        save_snapshot(tensor_store, "pretrain_extra", {"other": np.zeros(1)})
        loaded = load_snapshot(tensor_store, "pretrain")
        assert sorted(loaded) == sorted(state)
        np.testing.assert_array_equal(loaded["positional"], [0.0, 1.0, 2.0])


class TestTrainingLoop:
    """Tests for the epoch loop."""

    def test_records_each_epoch(self, train_config: TrainConfig) -> None:
        """Test history length, epoch numbers and decreasing loss."""
        loop, _ = _quadratic_loop(train_config.model_copy(update={"lr": 0.1}))
        report = loop.run()
        assert report.stage == "quadratic"
        assert [r.epoch for r in report.history] == [1, 2]
        assert report.initial_eval_loss == pytest.approx(10.0)
        assert report.final_eval_loss < report.initial_eval_loss
        assert report.trainable_parameters == 2
        assert not report.diverged
        assert report.history[-1].density == pytest.approx(0.5)
        assert report.history[-1].atom_usage == (0, 1)

    def test_zero_epochs_is_evaluation_only(self, train_config: TrainConfig) -> None:
        """Test that epochs=0 leaves parameters untouched."""
        loop, x = _quadratic_loop(train_config.model_copy(update={"epochs": 0}))
        report = loop.run()
        assert report.history == ()
        assert report.final_eval_loss == report.initial_eval_loss
        np.testing.assert_array_equal(x.data, [0.0, 4.0])

    def test_zero_epochs_needs_no_parameters(self, train_config: TrainConfig) -> None:
        """Test an evaluation-only run with nothing trainable."""
        loop = TrainingLoop(
            "eval", {}, train_config, lambda e, s: Tensor(0.0), lambda: Evaluation(1.5),
            epochs=0,
        )
        report = loop.run()
        assert report.final_eval_loss == 1.5
        assert report.trainable_parameters == 0

    def test_divergence_stops_the_run(self, train_config: TrainConfig) -> None:
        """Test that a numeric failure ends training with diverged=True."""
        cfg = train_config.model_copy(update={"epochs": 4})
        loop, _ = _quadratic_loop(cfg, fail_at=2)
        report = loop.run()
        assert report.diverged
        assert report.epochs_completed == 1
        assert report.final_eval_loss == report.history[0].eval_loss

    def test_epoch_override(self, train_config: TrainConfig) -> None:
        """Test the explicit epoch count used for warm-up stages."""
        x = Tensor([1.0], requires_grad=True)
        loop = TrainingLoop(
            "warmup", {"x": x}, train_config, lambda e, s: (x * x).sum(),
            lambda: Evaluation(float(x.data[0] ** 2)), steps_per_epoch=1, epochs=3,
        )
        assert loop.run().epochs_completed == 3

"""
Integration tests for the pre-train / fine-tune protocols and the
training-based analyses, at sizes small enough for the fast suite.
"""

import numpy as np
import pytest

from adapters.storage.memory import InMemoryTensorStore
from atoms.analysis import ablation_sweep, atom_influence, stability_duel
from atoms.errors import ContractError
from atoms.rng import SplitMix64, derive_seed
from atoms.schemas import DigitDataset, FourierTaskSpec, FreezePolicy, TrainConfig
from atoms.tasks import DigitVae, SignalModel, gen_fourier_batch, stream_spec
from atoms.training import (
    finetune_signal,
    finetune_vae_dictionary,
    pretrain_signal,
    pretrain_vae,
    split_holdout,
    warmup_signal_adapters,
)

HIGH = (5, 8)
WARMUP = (0, 4)


@pytest.fixture
def high_spec(small_spec: FourierTaskSpec) -> FourierTaskSpec:
    return small_spec.with_band(*HIGH)


class TestSignalProtocol:
    """Tests for pre-training and sparse fine-tuning on the signal task."""

    def test_pretrain(
        self,
        small_spec: FourierTaskSpec,
        signal_model: SignalModel,
        train_config: TrainConfig,
        tensor_store: InMemoryTensorStore,
    ) -> None:
        """Test history length, finite losses and the base snapshot."""
        report = pretrain_signal(small_spec, signal_model, train_config, tensor_store)
        assert len(report.history) == 2
        assert np.isfinite(report.final_eval_loss)
        assert report.snapshot_ref == "pretrain_signal"
        keys = tensor_store.list_keys("pretrain_signal/")
        assert "pretrain_signal/positional" in keys
        assert not any(".adapters." in key for key in keys)

    def test_pretrain_rejects_adapters(
        self,
        small_spec: FourierTaskSpec,
        signal_model: SignalModel,
        train_config: TrainConfig,
    ) -> None:
        """Test that pre-training needs a bare model."""
        signal_model.attach_adapters(train_config.adapter, 0)
        with pytest.raises(ContractError):
            pretrain_signal(small_spec, signal_model, train_config)

    def test_atoms_only_keeps_w_s(
        self,
        high_spec: FourierTaskSpec,
        signal_model: SignalModel,
        train_config: TrainConfig,
        tensor_store: InMemoryTensorStore,
    ) -> None:
        """Test frozen coefficients, learned atoms and the adapter snapshot."""
        reference = signal_model.copy().attach_adapters(
            train_config.adapter, derive_seed(train_config.seed, "adapters")
        )
        report = finetune_signal(
            high_spec, signal_model, train_config.adapter, FreezePolicy.ATOMS_ONLY,
            train_config, tensor_store,
        )
        adapter = signal_model.adapters[0]
        np.testing.assert_array_equal(adapter.w_s.data, reference[0].w_s.data)
        assert np.abs(adapter.dictionary.data).max() > 0
        assert report.trainable_parameters == 8 * 64
        assert tensor_store.exists("finetune_signal/adapters.0.dictionary")
        assert "pretrained_eval_loss" in report.extra

    def test_base_untouched(
        self,
        high_spec: FourierTaskSpec,
        signal_model: SignalModel,
        train_config: TrainConfig,
    ) -> None:
        """Test that fine-tuning never moves base parameters."""
        before = signal_model.base_state()
        finetune_signal(
            high_spec, signal_model, train_config.adapter, FreezePolicy.BOTH, train_config
        )
        after = signal_model.base_state()
        for name, value in before.items():
            np.testing.assert_array_equal(after[name], value)

    def test_zero_epochs_is_pretrained(
        self,
        high_spec: FourierTaskSpec,
        signal_model: SignalModel,
        train_config: TrainConfig,
    ) -> None:
        """Test that freshly attached adapters leave the eval loss unchanged."""
        cfg = train_config.model_copy(update={"epochs": 0})
        report = finetune_signal(high_spec, signal_model, cfg.adapter, FreezePolicy.BOTH, cfg)
        assert report.history == ()
        assert report.final_eval_loss == report.extra["pretrained_eval_loss"]

    def test_warmup_trains_both_sides(
        self,
        small_spec: FourierTaskSpec,
        signal_model: SignalModel,
        train_config: TrainConfig,
        tensor_store: InMemoryTensorStore,
    ) -> None:
        """Test the warm-up snapshot and its refusal of a model with adapters."""
        report = warmup_signal_adapters(
            small_spec.with_band(*WARMUP), signal_model, train_config.adapter,
            train_config, tensor_store,
        )
        assert report.stage == "finetune_signal_warmup"
        assert report.trainable_parameters == 2 * 8 * 64
        assert tensor_store.exists("finetune_signal_warmup/adapters.0.w_s")
        assert np.abs(signal_model.adapters[0].dictionary.data).max() > 0
        with pytest.raises(ContractError):
            warmup_signal_adapters(
                small_spec, signal_model, train_config.adapter, train_config
            )

    @pytest.mark.parametrize(
        ("policy", "frozen"),
        [
            (FreezePolicy.ATOMS_ONLY, "w_s"),
            (FreezePolicy.COEFFICIENTS_ONLY, "dictionary"),
        ],
    )
    def test_freezing_holds_after_warmup(
        self,
        small_spec: FourierTaskSpec,
        high_spec: FourierTaskSpec,
        signal_model: SignalModel,
        train_config: TrainConfig,
        policy: FreezePolicy,
        frozen: str,
    ) -> None:
        """Test the frozen side bit-identical over a whole warm-started run."""
        warmup_signal_adapters(
            small_spec.with_band(*WARMUP), signal_model, train_config.adapter, train_config
        )
        before = signal_model.state_dict()
        report = finetune_signal(
            high_spec, signal_model, train_config.adapter, policy, train_config
        )
        after = signal_model.state_dict()
        np.testing.assert_array_equal(
            after[f"adapters.0.{frozen}"], before[f"adapters.0.{frozen}"]
        )
        trained = "dictionary" if frozen == "w_s" else "w_s"
        assert not np.array_equal(
            after[f"adapters.0.{trained}"], before[f"adapters.0.{trained}"]
        )
        for name, value in signal_model.base_state().items():
            np.testing.assert_array_equal(value, before[name])
        assert report.trainable_parameters == 8 * 64
        assert len(report.history) == train_config.epochs

    def test_deterministic(
        self,
        high_spec: FourierTaskSpec,
        signal_model: SignalModel,
        train_config: TrainConfig,
    ) -> None:
        """Test identical histories for identical seeds."""
        first = finetune_signal(
            high_spec, signal_model.copy(), train_config.adapter, FreezePolicy.BOTH,
            train_config,
        )
        second = finetune_signal(
            high_spec, signal_model.copy(), train_config.adapter, FreezePolicy.BOTH,
            train_config,
        )
        assert first.history == second.history


class TestDigitProtocol:
    """Tests for the VAE pre-training and dictionary fine-tuning."""

    def test_split_holdout(self, digits_59: DigitDataset) -> None:
        """Test the last min(eval_size, N // 5) samples."""
        train, holdout = split_holdout(digits_59, 8)
        assert len(train) == 16
        assert len(holdout) == 4
        np.testing.assert_array_equal(holdout.images, digits_59.images[16:])

    def test_split_needs_two(self, digits_3: DigitDataset) -> None:
        """Test a single-image dataset."""
        single = DigitDataset(digits_3.images[:1], digits_3.labels[:1], digits_3.source)
        with pytest.raises(ContractError):
            split_holdout(single, 8)

    def test_pretrain(
        self,
        digits_59: DigitDataset,
        tiny_vae: DigitVae,
        train_config: TrainConfig,
        tensor_store: InMemoryTensorStore,
    ) -> None:
        """Test finite losses and the VAE snapshot."""
        report = pretrain_vae(digits_59, tiny_vae, train_config, tensor_store)
        assert len(report.history) == 2
        assert np.isfinite(report.final_eval_loss)
        assert tensor_store.list_keys("pretrain_vae/")

    def test_pretrain_rejects_threes(
        self, digits_3: DigitDataset, tiny_vae: DigitVae, train_config: TrainConfig
    ) -> None:
        """Test the class restriction."""
        with pytest.raises(ContractError):
            pretrain_vae(digits_3, tiny_vae, train_config)

    def test_dictionary_finetune(
        self,
        digits_3: DigitDataset,
        tiny_vae: DigitVae,
        train_config: TrainConfig,
        tensor_store: InMemoryTensorStore,
    ) -> None:
        """Test trainable sizes, the frozen baseline and stored coefficients."""
        base = tiny_vae.copy()
        report = finetune_vae_dictionary(digits_3, tiny_vae, 8, train_config, tensor_store)
        assert report.trainable_parameters == 16 * 8 + 8 * 16
        assert report.extra["frozen_eval_loss"] == report.initial_eval_loss
        assert tensor_store.exists("finetune_vae_dictionary/coefficients.0")

        again = finetune_vae_dictionary(
            digits_3, base, 8, train_config.model_copy(update={"epochs": 0})
        )
        assert again.initial_eval_loss == report.initial_eval_loss


class TestInfluenceOnModel:
    """Tests for atom influence through a real signal model."""

    def test_single_block_is_additive(
        self, small_spec: FourierTaskSpec, signal_model: SignalModel,
        train_config: TrainConfig,
    ) -> None:
        """Test per-atom maps summing to the combined map for one block."""
        cfg = train_config.adapter.model_copy(update={"lam": 0.0})
        adapter = signal_model.attach_adapters(cfg, 3)[0]
        adapter.dictionary.data = SplitMix64(4).normal(adapter.dictionary.shape).astype(
            np.float32
        )
        batch = gen_fourier_batch(stream_spec(small_spec, "influence"), 2)
        report = atom_influence(signal_model, (batch.masked, batch.mask), 0)
        assert len(report.atoms) == 8
        assert report.combined.shape == (2, 16)
        assert report.additivity_gap < 1e-3


class TestDuelAndSweep:
    """Tests for the rank-1 duel and the ablation sweep drivers."""

    def test_duel(self, high_spec: FourierTaskSpec, train_config: TrainConfig) -> None:
        """Test one probe loss per context and the single-atom support."""
        model = SignalModel(0, length=16, num_blocks=1, context_size=3)
        cfg = train_config.model_copy(update={"epochs": 1, "steps_per_epoch": 1})
        report = stability_duel(model, high_spec, cfg, num_probes=2, perturbation=0.1)
        assert set(report.train_loss) == {"sparse", "lowrank"}
        assert len(report.probe_losses["sparse"]) == 2
        assert len(report.probe_losses["lowrank"]) == 2
        assert report.support_ok

    def test_duel_needs_context(
        self, high_spec: FourierTaskSpec, signal_model: SignalModel,
        train_config: TrainConfig,
    ) -> None:
        """Test a model without a context table."""
        with pytest.raises(ContractError):
            stability_duel(signal_model, high_spec, train_config)

    def test_sweep(
        self, high_spec: FourierTaskSpec, signal_model: SignalModel,
        train_config: TrainConfig,
    ) -> None:
        """Test one row per dictionary size and an untouched source model."""
        before = signal_model.base_state()
        cfg = train_config.model_copy(update={"epochs": 1, "steps_per_epoch": 1})
        rows = ablation_sweep("M", [4, 8], cfg, signal_model, high_spec, transfer_band=(4, 6))
        assert [row.axis_value for row in rows] == [4.0, 8.0]
        assert all(np.isfinite(row.transfer_loss) for row in rows)
        assert not signal_model.adapters
        np.testing.assert_array_equal(signal_model.base_state()["positional"], before["positional"])

    def test_sweep_needs_values(
        self, high_spec: FourierTaskSpec, signal_model: SignalModel,
        train_config: TrainConfig,
    ) -> None:
        """Test an empty value list."""
        with pytest.raises(ContractError):
            ablation_sweep("rho", [], train_config, signal_model, high_spec)

"""
Unit tests for domain records and configuration models.
"""

import numpy as np
import pytest
from pydantic import ValidationError

from atoms.errors import ContractError
from atoms.schemas import (
    ActivationKind,
    ActivationPolicy,
    AdapterConfig,
    EpochRecord,
    FreezePolicy,
    PolyLayer,
    RunManifest,
    RunReport,
    TrainConfig,
)


class TestActivationPolicy:
    """Tests for activation policy construction."""

    def test_constructors(self) -> None:
        """Test the three named constructors."""
        assert ActivationPolicy.soft_threshold(0.1).kind is ActivationKind.SOFT_THRESHOLD
        assert ActivationPolicy.shifted_relu(0.1).lam == 0.1
        assert ActivationPolicy.top_k(3).k == 3

    def test_validation(self) -> None:
        """Test negative lambda and k = 0."""
        with pytest.raises(ContractError):
            ActivationPolicy.soft_threshold(-0.1)
        with pytest.raises(ContractError):
            ActivationPolicy.shifted_relu(float("nan"))
        with pytest.raises(ContractError):
            ActivationPolicy.top_k(0)

    def test_to_dict(self) -> None:
        """Test the serialized form of each kind."""
        assert ActivationPolicy.top_k(2).to_dict() == {"activation": "top_k", "k": 2}
        assert ActivationPolicy.soft_threshold(0.5).to_dict() == {
            "activation": "soft_threshold", "lambda": 0.5,
        }


class TestAdapterConfig:
    """Tests for adapter settings."""

    def test_lambda_alias(self) -> None:
        """Test that config files may spell lambda out."""
        cfg = AdapterConfig.model_validate({"lambda": 0.01})
        assert cfg.lam == 0.01
        assert AdapterConfig(lam=0.2).lam == 0.2

    def test_top_k_from_density(self) -> None:
        """Test k = round(rho·M) with a floor of one."""
        cfg = AdapterConfig(dictionary_size=100, activation="top_k", density_target=0.02)
        assert cfg.policy() == ActivationPolicy.top_k(2)
        tiny = AdapterConfig(dictionary_size=10, activation="top_k", density_target=0.01)
        assert tiny.policy().k == 1

    def test_explicit_k_must_fit(self) -> None:
        """Test k > M."""
        with pytest.raises(ContractError):
            AdapterConfig(dictionary_size=4, activation="top_k", k=5).policy()

    def test_unknown_field(self) -> None:
        """Test that typos are rejected."""
        with pytest.raises(ValidationError):
            AdapterConfig(dictonary_size=4)

    def test_frozen(self) -> None:
        """Test immutability."""
        cfg = AdapterConfig()
        with pytest.raises(ValidationError):
            cfg.lam = 0.5


class TestTrainConfig:
    """Tests for run settings."""

    def test_defaults(self) -> None:
        """Test the documented defaults."""
        cfg = TrainConfig()
        assert cfg.optimizer == "adam"
        assert cfg.lr == 1e-3
        assert cfg.betas == (0.9, 0.999)
        assert cfg.grad_clip == 1.0
        assert cfg.noise_std == 0.3

    def test_adapter_view(self) -> None:
        """Test that adapter settings are carried over."""
        cfg = TrainConfig(dictionary_size=12, lam=0.05, init_scale=0.1)
        assert cfg.adapter.dictionary_size == 12
        assert cfg.adapter.lam == 0.05
        assert cfg.adapter.init_scale == 0.1

    def test_betas_from_text(self) -> None:
        """Test the comma-separated form."""
        assert TrainConfig(betas="0.8,0.99").betas == (0.8, 0.99)

    @pytest.mark.parametrize(
        "override",
        [{"lr": 0.0}, {"epochs": -1}, {"batch_size": 0}, {"optimizer": "sgd"}],
    )
    def test_invalid(self, override: dict[str, object]) -> None:
        """Test out-of-range values."""
        with pytest.raises(ValidationError):
            TrainConfig(**override)


class TestRecords:
    """Tests for training and analysis records."""

    def test_freeze_policy_flags(self) -> None:
        """Test which sides each policy trains."""
        assert FreezePolicy.ATOMS_ONLY.trains_atoms
        assert not FreezePolicy.ATOMS_ONLY.trains_coefficients
        assert FreezePolicy.COEFFICIENTS_ONLY.trains_coefficients
        assert FreezePolicy.BOTH.trains_atoms and FreezePolicy.BOTH.trains_coefficients
        assert FreezePolicy("atoms_only") is FreezePolicy.ATOMS_ONLY

    def test_epoch_record_validation(self) -> None:
        """Test non-finite losses and an out-of-range density."""
        with pytest.raises(ContractError):
            EpochRecord(epoch=1, train_loss=float("nan"), eval_loss=0.1, density=0.5)
        with pytest.raises(ContractError):
            EpochRecord(epoch=1, train_loss=0.1, eval_loss=0.1, density=1.5)

    def test_run_summary(self) -> None:
        """Test the summary payload and extra metrics."""
        record = EpochRecord(epoch=1, train_loss=0.5, eval_loss=0.4, density=0.1)
        report = RunReport(
            stage="finetune_signal",
            seed=7,
            history=(record,),
            initial_eval_loss=0.9,
            final_eval_loss=0.4,
            trainable_parameters=128,
            extra={"warmup_eval_loss": 0.3},
        )
        summary = report.to_summary()
        assert summary["epochs_completed"] == 1
        assert summary["final_eval_loss"] == 0.4
        assert summary["warmup_eval_loss"] == 0.3
        assert summary["diverged"] is False

    def test_manifest(self) -> None:
        """Test the empty-command check and sorted file listing."""
        with pytest.raises(ContractError):
            RunManifest(command="", seed=0, config={})
        manifest = RunManifest(command="run", seed=1, config={}, files={"b": "2", "a": "1"})
        assert list(manifest.to_dict()["files"]) == ["a", "b"]

    def test_poly_layer(self) -> None:
        """Test f(x) = 2x + 3x² elementwise."""
        poly = PolyLayer((2.0, 3.0))
        assert poly.degree == 2
        np.testing.assert_allclose(poly(np.array([1.0, -1.0])), [5.0, 1.0])
        with pytest.raises(ContractError):
            PolyLayer(())

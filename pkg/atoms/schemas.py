"""
Domain models, configuration records and Port interfaces.

This file consolidates the engine's records and abstract interfaces (Ports).
Domain code in `atoms/` depends only on these definitions, never on
`adapters/`, `commands/` or `app/`.
"""

from __future__ import annotations

import math
from collections.abc import Mapping, Sequence
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Literal, Protocol, runtime_checkable

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from atoms.errors import ContractError, DimensionError
from atoms.tensor.core import Tensor


def _split_list(value: Any) -> Any:
    if isinstance(value, str):
        text = value.strip()
        if ".." in text:
            return tuple(part.strip() for part in text.split("..", 1))
        return tuple(part.strip() for part in text.split(",") if part.strip())
    return value


# =============================================================================
# SPARSE CODING
# =============================================================================

class ActivationKind(str, Enum):
    SOFT_THRESHOLD = "soft_threshold"
    SHIFTED_RELU = "shifted_relu"
    TOP_K = "top_k"


@dataclass(frozen=True)
class ActivationPolicy:
    """The sparsifying activation applied to adapter coefficients."""
    kind: ActivationKind
    lam: float = 0.0
    k: int = 0

    def __post_init__(self) -> None:
        if self.kind is ActivationKind.TOP_K:
            if self.k < 1:
                raise ContractError(f"top_k needs k >= 1, got {self.k}")
        elif self.lam < 0 or not math.isfinite(self.lam):
            raise ContractError(f"lambda must be a finite value >= 0, got {self.lam}")

    @classmethod
    def soft_threshold(cls, lam: float) -> ActivationPolicy:
        return cls(ActivationKind.SOFT_THRESHOLD, lam=lam)

    @classmethod
    def shifted_relu(cls, lam: float) -> ActivationPolicy:
        return cls(ActivationKind.SHIFTED_RELU, lam=lam)

    @classmethod
    def top_k(cls, k: int) -> ActivationPolicy:
        return cls(ActivationKind.TOP_K, k=k)

    def to_dict(self) -> dict[str, Any]:
        if self.kind is ActivationKind.TOP_K:
            return {"activation": self.kind.value, "k": self.k}
        return {"activation": self.kind.value, "lambda": self.lam}


@dataclass(frozen=True)
class SparseCodeProblem:
    """min_S ½‖X − S·D‖² + λ‖S‖₁ for a fixed dictionary."""
    signal: Tensor
    dictionary: Tensor
    lam: float
    max_iters: int = 1000
    tol: float = 1e-10

    def __post_init__(self) -> None:
        if self.signal.ndim != 2 or self.dictionary.ndim != 2:
            raise DimensionError("signal and dictionary must be matrices")
        if self.signal.shape[1] != self.dictionary.shape[1]:
            raise DimensionError(
                f"signal width {self.signal.shape[1]} != "
                f"atom width {self.dictionary.shape[1]}"
            )
        if not np.isfinite(self.dictionary.data).all():
            raise ContractError("dictionary rows must be finite")
        if self.lam <= 0:
            raise ContractError(f"lambda must be positive, got {self.lam}")
        if self.max_iters < 1 or self.tol <= 0:
            raise ContractError("max_iters must be >= 1 and tol > 0")


@dataclass(frozen=True)
class SolverDiagnostics:
    iterations: int
    objective: float
    converged: bool
    lipschitz: float
    objective_history: tuple[float, ...] = ()


# =============================================================================
# CONFIGURATION MODELS
# =============================================================================

class _Config(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True, populate_by_name=True)


class FourierTaskSpec(_Config):
    """Masked reconstruction of signals built from a few Fourier bases."""
    length: int = Field(64, ge=2)
    num_bases: int = Field(5, ge=1)
    freq_band: tuple[int, int] = (0, 24)
    mask_observed: int = Field(16, ge=1)
    seed: int = Field(0, ge=0, lt=2**64)

    _split_band = field_validator("freq_band", mode="before")(_split_list)

    @model_validator(mode="after")
    def _check(self) -> FourierTaskSpec:
        low, high = self.freq_band
        if low < 0 or low > high:
            raise ValueError(f"frequency band {low}..{high} is empty")
        if high > self.length // 2:
            raise ValueError(f"band top {high} exceeds Nyquist {self.length // 2}")
        if self.mask_observed > self.length:
            raise ValueError("mask_observed cannot exceed length")
        return self

    def with_band(self, low: int, high: int) -> FourierTaskSpec:
        return self.model_copy(update={"freq_band": (low, high)})


class AdapterConfig(_Config):
    dictionary_size: int = Field(100, ge=1)
    activation: ActivationKind = ActivationKind.SOFT_THRESHOLD
    lam: float = Field(0.1, ge=0, alias="lambda")
    k: int | None = Field(None, ge=1)
    density_target: float | None = Field(None, gt=0, le=1)
    apply_before_attention: bool = True
    init_scale: float = Field(0.02, gt=0)

    def policy(self) -> ActivationPolicy:
        if self.activation is ActivationKind.TOP_K:
            k = self.k
            if k is None:
                rho = self.density_target if self.density_target is not None else 0.02
                k = max(1, round(rho * self.dictionary_size))
            if k > self.dictionary_size:
                raise ContractError(f"k={k} exceeds dictionary size {self.dictionary_size}")
            return ActivationPolicy.top_k(k)
        return ActivationPolicy(self.activation, lam=self.lam)


class TrainConfig(_Config):
    """Optimizer, schedule and adapter settings for one run."""
    optimizer: Literal["adam", "adamw"] = "adam"
    lr: float = Field(1e-3, gt=0)
    betas: tuple[float, float] = (0.9, 0.999)
    eps: float = Field(1e-8, gt=0)
    weight_decay: float = Field(0.0, ge=0)
    epochs: int = Field(20, ge=0)
    batch_size: int = Field(64, ge=1)
    steps_per_epoch: int = Field(16, ge=1)
    eval_size: int = Field(256, ge=1)
    seed: int = Field(0, ge=0, lt=2**64)
    grad_clip: float | None = Field(1.0, gt=0)
    ortho_weight: float = Field(1e-3, ge=0)
    kl_weight: float = Field(1e-3, ge=0)
    noise_std: float = Field(0.3, ge=0)
    dictionary_size: int = Field(100, ge=1)
    activation: ActivationKind = ActivationKind.SOFT_THRESHOLD
    lam: float = Field(0.1, ge=0, alias="lambda")
    k: int | None = Field(None, ge=1)
    density_target: float | None = Field(None, gt=0, le=1)
    apply_before_attention: bool = True
    init_scale: float = Field(0.02, gt=0)

    _split_betas = field_validator("betas", mode="before")(_split_list)

    @property
    def adapter(self) -> AdapterConfig:
        return AdapterConfig(
            dictionary_size=self.dictionary_size,
            activation=self.activation,
            lam=self.lam,
            k=self.k,
            density_target=self.density_target,
            apply_before_attention=self.apply_before_attention,
            init_scale=self.init_scale,
        )


# =============================================================================
# TRAINING RECORDS
# =============================================================================

class FreezePolicy(str, Enum):
    ATOMS_ONLY = "atoms_only"
    COEFFICIENTS_ONLY = "coefficients_only"
    BOTH = "both"
    FULL_MODEL = "full_model"

    @property
    def trains_atoms(self) -> bool:
        return self in (FreezePolicy.ATOMS_ONLY, FreezePolicy.BOTH)

    @property
    def trains_coefficients(self) -> bool:
        return self in (FreezePolicy.COEFFICIENTS_ONLY, FreezePolicy.BOTH)


@dataclass(frozen=True)
class EpochRecord:
    epoch: int
    train_loss: float
    eval_loss: float
    density: float
    active_atoms: int = 0
    atom_usage: tuple[int, ...] = ()

    def __post_init__(self) -> None:
        if not (math.isfinite(self.train_loss) and math.isfinite(self.eval_loss)):
            raise ContractError(f"epoch {self.epoch} has non-finite losses")
        if not 0.0 <= self.density <= 1.0:
            raise ContractError(f"density {self.density} outside [0, 1]")


@dataclass(frozen=True)
class RunReport:
    """Outcome of one training stage."""
    stage: str
    seed: int
    history: tuple[EpochRecord, ...]
    initial_eval_loss: float
    final_eval_loss: float
    trainable_parameters: int
    diverged: bool = False
    snapshot_ref: str | None = None
    extra: Mapping[str, float] = field(default_factory=dict)

    @property
    def epochs_completed(self) -> int:
        return len(self.history)

    def to_summary(self) -> dict[str, Any]:
        return {
            "stage": self.stage,
            "seed": self.seed,
            "epochs_completed": self.epochs_completed,
            "initial_eval_loss": self.initial_eval_loss,
            "final_eval_loss": self.final_eval_loss,
            "trainable_parameters": self.trainable_parameters,
            "diverged": self.diverged,
            "snapshot_ref": self.snapshot_ref,
            **dict(self.extra),
        }


# =============================================================================
# ANALYSIS RECORDS
# =============================================================================

@dataclass(frozen=True)
class CostBreakdown:
    train_params: float
    storage_params: float
    flops: float


@dataclass(frozen=True)
class CostReport:
    sparse: CostBreakdown
    lowrank: CostBreakdown
    inputs: Mapping[str, float]

    def to_dict(self) -> dict[str, Any]:
        return {
            "inputs": dict(self.inputs),
            "sparse": vars(self.sparse).copy(),
            "lowrank": vars(self.lowrank).copy(),
        }


@dataclass(frozen=True)
class AtomInfluence:
    """Output-space delta produced by a single atom of one adapted layer."""
    layer: int
    atom: int
    contribution: np.ndarray
    importance: float


@dataclass(frozen=True)
class InfluenceReport:
    layer: int
    atoms: tuple[AtomInfluence, ...]
    combined: np.ndarray
    additivity_gap: float

    @property
    def summed(self) -> np.ndarray:
        total = np.zeros_like(self.combined)
        for atom in self.atoms:
            total = total + atom.contribution
        return total


@dataclass(frozen=True)
class PolyLayer:
    """Elementwise polynomial f(x) = Σ_k c_k x^k for k = 1..K."""
    coefficients: tuple[float, ...]

    def __post_init__(self) -> None:
        if len(self.coefficients) < 1:
            raise ContractError("a polynomial layer needs at least one coefficient")

    @property
    def degree(self) -> int:
        return len(self.coefficients)

    def __call__(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        out = np.zeros_like(x)
        for k, c in enumerate(self.coefficients, start=1):
            out = out + c * x**k
        return out


@dataclass(frozen=True)
class ExpansionResult:
    """Per-atom series of a one-layer perturbation expansion."""
    series: np.ndarray
    base: np.ndarray
    perturbed: np.ndarray
    residual: np.ndarray
    relative_residual: float
    supports_disjoint: bool


@dataclass(frozen=True)
class TwoLayerExpansion:
    current_series: np.ndarray
    previous_series: np.ndarray
    degree_profiles: np.ndarray
    max_degree: int
    base: np.ndarray
    perturbed: np.ndarray
    residual: np.ndarray
    relative_residual: float


@dataclass(frozen=True)
class ExpansionCheck:
    """Worst residuals over a batch of random expansion cases."""
    cases: int
    two_layer_cases: int
    max_relative_residual: float
    max_two_layer_residual: float
    rejects_non_orthogonal: bool

    def passed(self, tolerance: float = 1e-6) -> bool:
        return (
            self.rejects_non_orthogonal
            and self.max_relative_residual < tolerance
            and self.max_two_layer_residual < tolerance
        )


@dataclass(frozen=True)
class SweepRow:
    axis_value: float
    eval_loss: float
    transfer_loss: float
    density: float


@dataclass(frozen=True)
class DuelReport:
    seed: int
    train_loss: Mapping[str, float]
    probe_losses: Mapping[str, tuple[float, ...]]
    coefficient_noise: Mapping[str, float]
    support_ok: bool

    def mean_probe_loss(self, method: str) -> float:
        losses = self.probe_losses[method]
        return float(sum(losses) / len(losses))


@dataclass(frozen=True)
class RunManifest:
    """Everything needed to re-run a command and check its outputs."""
    command: str
    seed: int
    config: Mapping[str, Any]
    files: Mapping[str, str] = field(default_factory=dict)
    format_versions: Mapping[str, int] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if not self.command:
            raise ContractError("manifest command cannot be empty")

    def to_dict(self) -> dict[str, Any]:
        return {
            "command": self.command,
            "seed": self.seed,
            "config": dict(self.config),
            "files": dict(sorted(self.files.items())),
            "format_versions": dict(sorted(self.format_versions.items())),
        }


# =============================================================================
# DATA
# =============================================================================

@dataclass(frozen=True)
class DigitDataset:
    """28×28 grayscale digits in [0, 1] with integer labels."""
    images: np.ndarray
    labels: np.ndarray
    source: str = "synthetic"

    def __post_init__(self) -> None:
        if self.images.ndim != 3 or self.images.shape[1:] != (28, 28):
            raise DimensionError(f"images must be N×28×28, got {self.images.shape}")
        if len(self.images) != len(self.labels):
            raise DimensionError("image and label counts differ")

    def __len__(self) -> int:
        return len(self.labels)

    @property
    def classes(self) -> tuple[int, ...]:
        return tuple(int(c) for c in np.unique(self.labels))

    def subset(self, classes: Sequence[int]) -> DigitDataset:
        keep = np.isin(self.labels, list(classes))
        return DigitDataset(self.images[keep], self.labels[keep], self.source)

    def take(self, count: int) -> DigitDataset:
        return DigitDataset(self.images[:count], self.labels[:count], self.source)


# =============================================================================
# PORTS (Interfaces)
# =============================================================================

@runtime_checkable
class TensorStorePort(Protocol):
    """Port for named tensor persistence (snapshots, bundles, datasets)."""

    def put(self, key: str, array: np.ndarray) -> None: ...
    def get(self, key: str) -> np.ndarray: ...
    def exists(self, key: str) -> bool: ...
    def list_keys(self, prefix: str = "") -> list[str]: ...
    def delete(self, key: str) -> None: ...


@runtime_checkable
class AdaptableModel(Protocol):
    """A model whose adapted layers can be switched on atom by atom."""

    @property
    def num_adapted_layers(self) -> int: ...

    def masked_output(
        self,
        inputs: Any,
        masks: Sequence[np.ndarray | None],
    ) -> np.ndarray: ...

    def adapter_coefficients(self, inputs: Any) -> list[np.ndarray]: ...

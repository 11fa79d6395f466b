"""
Adam / AdamW with bias correction, plus global-norm gradient clipping.

Moments are kept in float64; parameters are written back as float32.
"""

from __future__ import annotations

from collections.abc import Mapping
from dataclasses import dataclass, field

import numpy as np

from atoms.errors import ContractError, DimensionError, NumericError
from atoms.schemas import TrainConfig
from atoms.tensor import DTYPE, Tensor


@dataclass(frozen=True)
class AdamHyper:
    lr: float = 1e-3
    betas: tuple[float, float] = (0.9, 0.999)
    eps: float = 1e-8
    weight_decay: float = 0.0
    decoupled: bool = False

    def __post_init__(self) -> None:
        if self.lr <= 0:
            raise ContractError(f"lr must be positive, got {self.lr}")
        if not all(0.0 <= b < 1.0 for b in self.betas):
            raise ContractError(f"betas must lie in [0, 1), got {self.betas}")

    @classmethod
    def from_config(cls, cfg: TrainConfig) -> AdamHyper:
        return cls(
            lr=cfg.lr,
            betas=cfg.betas,
            eps=cfg.eps,
            weight_decay=cfg.weight_decay,
            decoupled=cfg.optimizer == "adamw",
        )


@dataclass
class AdamState:
    step: int = 0
    first: dict[str, np.ndarray] = field(default_factory=dict)
    second: dict[str, np.ndarray] = field(default_factory=dict)


def check_finite(grads: Mapping[str, np.ndarray]) -> None:
    for name, grad in grads.items():
        if not np.isfinite(grad).all():
            raise NumericError(f"non-finite gradient for parameter {name!r}")


def adam_step(
    params: Mapping[str, Tensor],
    grads: Mapping[str, np.ndarray],
    state: AdamState,
    hyper: AdamHyper,
) -> AdamState:
    """One bias-corrected Adam update, applied in place to params."""
    check_finite(grads)
    beta1, beta2 = hyper.betas
    step = state.step + 1
    correction1 = 1.0 - beta1**step
    correction2 = 1.0 - beta2**step

    for name, param in params.items():
        grad = grads.get(name)
        if grad is None:
            grad = np.zeros(param.shape)
        if grad.shape != param.shape:
            raise DimensionError(f"{name}: gradient {grad.shape} vs parameter {param.shape}")
        value = param.data.astype(np.float64)
        g = grad.astype(np.float64)
        if hyper.weight_decay and not hyper.decoupled:
            g = g + hyper.weight_decay * value

        first = state.first.get(name, np.zeros_like(value))
        second = state.second.get(name, np.zeros_like(value))
        first = beta1 * first + (1.0 - beta1) * g
        second = beta2 * second + (1.0 - beta2) * g * g
        state.first[name] = first
        state.second[name] = second

        update = (first / correction1) / (np.sqrt(second / correction2) + hyper.eps)
        if hyper.weight_decay and hyper.decoupled:
            value = value - hyper.lr * hyper.weight_decay * value
        param.data = np.ascontiguousarray((value - hyper.lr * update).astype(DTYPE))

    state.step = step
    return state


def clip_grad_norm(
    grads: Mapping[str, np.ndarray],
    max_norm: float | None,
) -> tuple[dict[str, np.ndarray], float]:
    """Scale all gradients together so their global L2 norm is at most max_norm."""
    check_finite(grads)
    total = float(np.sqrt(sum(float(np.sum(g.astype(np.float64) ** 2)) for g in grads.values())))
    if max_norm is None or total <= max_norm or total == 0.0:
        return dict(grads), total
    factor = max_norm / total
    return {name: (g * factor).astype(DTYPE) for name, g in grads.items()}, total


class Adam:
    """Adam bound to a fixed, named parameter set."""

    def __init__(self, params: Mapping[str, Tensor], hyper: AdamHyper,
                 max_grad_norm: float | None = None) -> None:
        if not params:
            raise ContractError("optimizer has no trainable parameters")
        self.params = dict(params)
        self.hyper = hyper
        self.max_grad_norm = max_grad_norm
        self.state = AdamState()

    @classmethod
    def from_config(cls, params: Mapping[str, Tensor], cfg: TrainConfig) -> Adam:
        return cls(params, AdamHyper.from_config(cfg), cfg.grad_clip)

    def zero_grad(self) -> None:
        for param in self.params.values():
            param.grad = None

    def step(self) -> float:
        """Apply the gradients left by backward(); returns the pre-clip norm."""
        grads = {
            name: (p.grad if p.grad is not None else np.zeros(p.shape, dtype=DTYPE))
            for name, p in self.params.items()
        }
        clipped, norm = clip_grad_norm(grads, self.max_grad_norm)
        adam_step(self.params, clipped, self.state, self.hyper)
        return norm

"""
Sparsifying activations.

All three are composed from tape operations so gradients come for free:
soft-threshold passes gradient 1 where |x| > lambda, shifted ReLU where
x > lambda, and top-k through the kept entries only.
"""

from __future__ import annotations

import numpy as np

from atoms.errors import ContractError
from atoms.schemas import ActivationKind, ActivationPolicy
from atoms.tensor import Tensor, hadamard, relu

NONZERO_THRESHOLD = 1e-8


def _check_lambda(lam: float) -> None:
    if lam < 0 or not np.isfinite(lam):
        raise ContractError(f"lambda must be a finite value >= 0, got {lam}")


def soft_threshold(x: Tensor, lam: float) -> Tensor:
    """sign(x) * max(|x| - lam, 0), the proximal operator of lam * ||.||_1."""
    _check_lambda(lam)
    return relu(x - lam) - relu(-x - lam)


def shifted_relu(x: Tensor, lam: float) -> Tensor:
    _check_lambda(lam)
    return relu(x - lam)


def top_k_mask(values: np.ndarray, k: int) -> np.ndarray:
    """0/1 mask of the k largest |values| along the last axis, lowest index on ties."""
    width = values.shape[-1]
    if not 1 <= k <= width:
        raise ContractError(f"k must lie in [1, {width}], got {k}")
    order = np.argsort(-np.abs(values), axis=-1, kind="stable")
    mask = np.zeros(values.shape, dtype=np.float32)
    np.put_along_axis(mask, order[..., :k], 1.0, axis=-1)
    return mask


def top_k_rows(x: Tensor, k: int) -> Tensor:
    """Keep the k entries of largest magnitude in each row, zero the rest."""
    return hadamard(x, Tensor(top_k_mask(x.data, k)))


def apply_activation(x: Tensor, policy: ActivationPolicy) -> Tensor:
    if policy.kind is ActivationKind.SOFT_THRESHOLD:
        return soft_threshold(x, policy.lam)
    if policy.kind is ActivationKind.SHIFTED_RELU:
        return shifted_relu(x, policy.lam)
    return top_k_rows(x, policy.k)

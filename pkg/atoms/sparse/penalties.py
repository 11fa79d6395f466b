"""Dictionary regularizers and sparsity statistics."""

from __future__ import annotations

import numpy as np

from atoms.errors import ContractError
from atoms.sparse.activations import NONZERO_THRESHOLD
from atoms.tensor import Tensor, hadamard, matmul, reduce_sum


def ortho_penalty(dictionary: Tensor) -> Tensor:
    """Sum over i != j of <d_i, d_j>^2 for the rows of an M x C dictionary."""
    if dictionary.ndim != 2 or dictionary.shape[0] < 1:
        raise ContractError(f"dictionary must be M x C with M >= 1, got {dictionary.shape}")
    gram = matmul(dictionary, dictionary.T)
    off_diagonal = hadamard(gram, Tensor(1.0 - np.eye(dictionary.shape[0])))
    return reduce_sum(hadamard(off_diagonal, off_diagonal))


def density(coefficients: Tensor | np.ndarray) -> float:
    """Fraction of entries with |s| > 1e-8."""
    values = coefficients.data if isinstance(coefficients, Tensor) else np.asarray(coefficients)
    if values.size == 0:
        return 0.0
    return float(np.count_nonzero(np.abs(values) > NONZERO_THRESHOLD) / values.size)


def atom_usage(coefficients: Tensor | np.ndarray) -> np.ndarray:
    """Per-atom count of nonzero coefficients over every leading axis."""
    values = coefficients.data if isinstance(coefficients, Tensor) else np.asarray(coefficients)
    active = np.abs(values) > NONZERO_THRESHOLD
    return active.reshape(-1, values.shape[-1]).sum(axis=0).astype(np.int64)


def atom_importance(coefficients: Tensor | np.ndarray) -> np.ndarray:
    """Column-wise mean of |S| over tokens (and batch)."""
    values = coefficients.data if isinstance(coefficients, Tensor) else np.asarray(coefficients)
    flat = np.abs(values.astype(np.float64)).reshape(-1, values.shape[-1])
    if flat.shape[0] == 0:
        return np.zeros(values.shape[-1])
    return flat.mean(axis=0)

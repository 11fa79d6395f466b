"""
Central finite-difference gradient checks.

The loss callable is re-evaluated with each input element nudged by +/- eps
(under no_grad); the difference quotient uses the step actually representable
in float32. The error metric is max |analytic - numeric| divided by
max(1, max |numeric|).
"""

from __future__ import annotations

from collections.abc import Callable, Mapping
from dataclasses import dataclass

import numpy as np

from atoms.tensor.core import DTYPE, Tensor, backward, no_grad


@dataclass(frozen=True)
class GradCheckResult:
    name: str
    analytic: np.ndarray
    numeric: np.ndarray
    error: float
    tolerance: float

    @property
    def passed(self) -> bool:
        return self.error <= self.tolerance


def _evaluate(loss_fn: Callable[[], Tensor]) -> float:
    with no_grad():
        return float(np.asarray(loss_fn().data, dtype=np.float64).sum())


def numerical_gradient(loss_fn: Callable[[], Tensor], tensor: Tensor,
                       eps: float = 1e-3) -> np.ndarray:
    original = tensor.data
    grad = np.zeros(original.shape, dtype=np.float64)
    try:
        for i in range(original.size):
            plus = original.copy()
            minus = original.copy()
            plus.flat[i] = plus.flat[i] + DTYPE(eps)
            minus.flat[i] = minus.flat[i] - DTYPE(eps)
            step = float(plus.flat[i]) - float(minus.flat[i])
            tensor.data = plus
            f_plus = _evaluate(loss_fn)
            tensor.data = minus
            f_minus = _evaluate(loss_fn)
            grad.flat[i] = (f_plus - f_minus) / step
    finally:
        tensor.data = original
    return grad


def check_gradients(
    loss_fn: Callable[[], Tensor],
    inputs: Mapping[str, Tensor],
    eps: float = 1e-3,
    tolerance: float = 1e-3,
) -> list[GradCheckResult]:
    """Compare backward() gradients with finite differences for each input."""
    loss = loss_fn()
    backward(loss)
    results = []
    for name, tensor in inputs.items():
        analytic = (
            np.zeros(tensor.shape) if tensor.grad is None
            else tensor.grad.astype(np.float64)
        )
        numeric = numerical_gradient(loss_fn, tensor, eps)
        scale = max(1.0, float(np.abs(numeric).max(initial=0.0)))
        error = float(np.abs(analytic - numeric).max(initial=0.0)) / scale
        results.append(GradCheckResult(name, analytic, numeric, error, tolerance))
    return results

"""
Parameter containers.

A Module exposes every Tensor attribute (recursing into child modules and
lists of modules) under a dotted name, in attribute order. Trainable tensors
are the ones with requires_grad set.
"""

from __future__ import annotations

from collections.abc import Iterator, Mapping
from typing import TypeVar

import numpy as np

from atoms.errors import DimensionError
from atoms.tensor.core import DTYPE, Tensor

M = TypeVar("M", bound="Module")


class Module:
    """Base class for layers, adapters and toy models."""

    def named_tensors(self, prefix: str = "") -> Iterator[tuple[str, Tensor]]:
        for attr, value in vars(self).items():
            if attr.startswith("_"):
                continue
            path = f"{prefix}{attr}"
            if isinstance(value, Tensor):
                yield path, value
            elif isinstance(value, Module):
                yield from value.named_tensors(f"{path}.")
            elif isinstance(value, (list, tuple)):
                for i, item in enumerate(value):
                    if isinstance(item, Module):
                        yield from item.named_tensors(f"{path}.{i}.")
                    elif isinstance(item, Tensor):
                        yield f"{path}.{i}", item

    def parameters(self) -> dict[str, Tensor]:
        """Trainable tensors by name."""
        return {name: t for name, t in self.named_tensors() if t.requires_grad}

    def num_parameters(self, trainable_only: bool = True) -> int:
        return sum(
            t.size for _, t in self.named_tensors()
            if t.requires_grad or not trainable_only
        )

    def freeze(self: M) -> M:
        for _, tensor in self.named_tensors():
            tensor.requires_grad = False
            tensor.grad = None
        return self

    def zero_grad(self) -> None:
        for _, tensor in self.named_tensors():
            tensor.grad = None

    def state_dict(self) -> dict[str, np.ndarray]:
        return {name: t.data.copy() for name, t in self.named_tensors()}

    def load_state_dict(self, state: Mapping[str, np.ndarray]) -> None:
        tensors = dict(self.named_tensors())
        missing = sorted(set(tensors) - set(state))
        unexpected = sorted(set(state) - set(tensors))
        if missing or unexpected:
            raise DimensionError(
                f"state mismatch: missing={missing} unexpected={unexpected}"
            )
        for name, tensor in tensors.items():
            value = np.asarray(state[name], dtype=DTYPE)
            if value.shape != tensor.shape:
                raise DimensionError(
                    f"{name}: expected {tensor.shape}, got {value.shape}"
                )
            tensor.data = value.copy()

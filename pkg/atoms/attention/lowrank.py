"""Low-rank adapter baseline: each targeted projection W becomes W + W_A·W_B."""

from __future__ import annotations

import math
from collections.abc import Iterable

from atoms.attention.layer import AttentionLayer, attend
from atoms.errors import ContractError
from atoms.rng import SplitMix64
from atoms.tensor import Module, Tensor, matmul

TARGETS = ("q", "k", "v", "o")


class LowRankAdapter(Module):
    """W_A (rows × r) Gaussian, W_B (r × C_o) zero, per targeted projection."""

    def __init__(self, factors: dict[str, tuple[Tensor, Tensor]]) -> None:
        if not factors:
            raise ContractError("a low-rank adapter needs at least one target")
        unknown = set(factors) - set(TARGETS)
        if unknown:
            raise ContractError(f"unknown targets {sorted(unknown)}; use {TARGETS}")
        ranks = {a.shape[1] for a, _ in factors.values()}
        if len(ranks) != 1 or any(b.shape[0] != a.shape[1] for a, b in factors.values()):
            raise ContractError("all factor pairs must share one rank")
        self._targets = tuple(t for t in TARGETS if t in factors)
        for target in self._targets:
            w_a, w_b = factors[target]
            setattr(self, f"a_{target}", w_a)
            setattr(self, f"b_{target}", w_b)

    @classmethod
    def initialize(
        cls,
        rng: SplitMix64,
        layer: AttentionLayer,
        rank: int,
        targets: Iterable[str] = ("v",),
    ) -> LowRankAdapter:
        if rank < 1:
            raise ContractError(f"rank must be >= 1, got {rank}")
        factors: dict[str, tuple[Tensor, Tensor]] = {}
        for target in targets:
            base = _base_weight(layer, target)
            rows, cols = base.shape
            w_a = Tensor(rng.normal((rows, rank), std=1.0 / math.sqrt(rows)),
                         requires_grad=True)
            w_b = Tensor.zeros(rank, cols, requires_grad=True)
            factors[target] = (w_a, w_b)
        return cls(factors)

    @property
    def targets(self) -> tuple[str, ...]:
        return self._targets

    @property
    def rank(self) -> int:
        return int(self.factors(self._targets[0])[0].shape[1])

    def factors(self, target: str) -> tuple[Tensor, Tensor]:
        if target not in self._targets:
            raise ContractError(f"{target!r} is not adapted")
        return getattr(self, f"a_{target}"), getattr(self, f"b_{target}")

    def update(self, target: str) -> Tensor:
        w_a, w_b = self.factors(target)
        return matmul(w_a, w_b)


def _base_weight(layer: AttentionLayer, target: str) -> Tensor:
    if target not in TARGETS:
        raise ContractError(f"unknown target {target!r}; use {TARGETS}")
    return getattr(layer, f"w_{target}")


def lowrank_adapted_forward(
    layer: AttentionLayer,
    lora: LowRankAdapter,
    x: Tensor,
) -> Tensor:
    weights = {}
    for target in TARGETS:
        base = _base_weight(layer, target)
        if target in lora.targets:
            update = lora.update(target)
            if update.shape != base.shape:
                raise ContractError(
                    f"update for W_{target} is {update.shape}, weight is {base.shape}"
                )
            base = base + update
        weights[target] = base
    return attend(
        x, weights["q"], weights["k"], weights["v"], weights["o"], layer.num_heads
    ).output

"""
Toy transformer for masked signal reconstruction.

Input (value, mask) pairs per position pass through a frozen random 2→64
projection, get a learned positional table added, then run through
residual attention blocks (width 128, back to 64 channels). The prediction
is the sum of the 64 output channels at each position.

block_kind="sparse" replaces each block's value path with a formulation-form
sparse dictionary σ_λ(A·X·W_s)·D trained from scratch.
"""

from __future__ import annotations

from collections.abc import Sequence
from typing import Literal, NamedTuple

import numpy as np

from atoms.attention import (
    AttentionLayer,
    LowRankAdapter,
    SparseAdapter,
    adapter_forward,
    attention_forward,
    lowrank_adapted_forward,
)
from atoms.errors import ContractError, DimensionError
from atoms.rng import SplitMix64
from atoms.schemas import ActivationPolicy, AdapterConfig
from atoms.tensor import Module, Tensor, matmul

CHANNELS = 64
FEATURES = 128

BlockKind = Literal["dense", "sparse"]


class SignalForward(NamedTuple):
    prediction: Tensor
    coefficients: tuple[Tensor, ...]
    block_codes: tuple[Tensor, ...] = ()
    attention: tuple[Tensor, ...] = ()


class SignalModel(Module):
    def __init__(
        self,
        seed: int,
        length: int = 64,
        num_blocks: int = 2,
        num_heads: int = 1,
        block_kind: BlockKind = "dense",
        context_size: int = 0,
        sparse_config: AdapterConfig | None = None,
    ) -> None:
        if num_blocks < 1:
            raise ContractError("a signal model needs at least one block")
        rng = SplitMix64(seed)
        self._config = {
            "seed": seed,
            "length": length,
            "num_blocks": num_blocks,
            "num_heads": num_heads,
            "block_kind": block_kind,
            "context_size": context_size,
            "sparse_config": sparse_config,
        }
        self._block_kind = block_kind
        self.projection = Tensor(rng.normal((2, CHANNELS), std=1.0 / np.sqrt(2.0)))
        self.positional = Tensor(
            rng.normal((length, CHANNELS), std=0.02), requires_grad=True
        )
        self.context = (
            Tensor(rng.normal((context_size, CHANNELS), std=1.0))
            if context_size > 0 else None
        )
        self.blocks = [
            AttentionLayer.initialize(
                rng.spawn("block", i), CHANNELS, FEATURES, num_heads, CHANNELS
            )
            for i in range(num_blocks)
        ]
        self.sparse_blocks: list[SparseAdapter] = []
        if block_kind == "sparse":
            config = sparse_config or AdapterConfig()
            for i, block in enumerate(self.blocks):
                block.w_v.requires_grad = False
                block.w_o.requires_grad = False
                sparse = SparseAdapter.initialize(
                    rng.spawn("sparse", i), CHANNELS, CHANNELS,
                    config.model_copy(update={"apply_before_attention": False}),
                )
                sparse.dictionary.data = rng.spawn("atoms", i).normal(
                    sparse.dictionary.shape, std=1.0 / np.sqrt(CHANNELS)
                ).astype(np.float32)
                self.sparse_blocks.append(sparse)
        self.adapters: list[SparseAdapter] = []
        self.lowrank: list[LowRankAdapter] = []

    # -- structure ---------------------------------------------------------

    @property
    def length(self) -> int:
        return self.positional.shape[0]

    @property
    def block_kind(self) -> str:
        return self._block_kind

    @property
    def num_adapted_layers(self) -> int:
        return len(self.adapters)

    def base_state(self) -> dict[str, np.ndarray]:
        """Parameters without any attached adapters."""
        return {
            name: value for name, value in self.state_dict().items()
            if not name.startswith(("adapters.", "lowrank."))
        }

    def copy(self, with_adapters: bool = False) -> SignalModel:
        twin = SignalModel(**self._config)
        twin.load_state_dict(self.base_state())
        if with_adapters:
            twin.adapters = [adapter.copy() for adapter in self.adapters]
        return twin

    def attach_adapters(self, config: AdapterConfig, seed: int) -> list[SparseAdapter]:
        """One zero-initialized sparse adapter per attention block."""
        rng = SplitMix64(seed)
        self.adapters = [
            SparseAdapter.initialize(rng.spawn("adapter", i), CHANNELS, CHANNELS, config)
            for i in range(len(self.blocks))
        ]
        return self.adapters

    def attach_lowrank(self, rank: int, targets: Sequence[str], seed: int) -> list[LowRankAdapter]:
        if self.sparse_blocks:
            raise ContractError("low-rank adapters need dense attention blocks")
        rng = SplitMix64(seed)
        self.lowrank = [
            LowRankAdapter.initialize(rng.spawn("lowrank", i), block, rank, targets)
            for i, block in enumerate(self.blocks)
        ]
        return self.lowrank

    # -- forward -----------------------------------------------------------

    def embed(self, masked: np.ndarray, mask: np.ndarray,
              context: np.ndarray | None = None) -> Tensor:
        if masked.shape != mask.shape or masked.shape[-1] != self.length:
            raise DimensionError(
                f"expected (B, {self.length}) signal and mask, got "
                f"{masked.shape} and {mask.shape}"
            )
        pairs = Tensor(np.stack([masked, mask], axis=-1))
        hidden = matmul(pairs, self.projection) + self.positional
        if context is not None:
            if self.context is None:
                raise ContractError("model was built without a context table")
            offset = matmul(Tensor(np.atleast_2d(context)), self.context)
            hidden = hidden + offset.reshape(offset.shape[0], 1, CHANNELS)
        return hidden

    def forward(
        self,
        masked: np.ndarray,
        mask: np.ndarray,
        context: np.ndarray | None = None,
        atom_masks: Sequence[np.ndarray | None] | None = None,
    ) -> SignalForward:
        hidden = self.embed(masked, mask, context)
        coefficients: list[Tensor] = []
        block_codes: list[Tensor] = []
        attention_maps: list[Tensor] = []
        for i, block in enumerate(self.blocks):
            if self.lowrank:
                lora = self.lowrank[i]
                coefficients.append(matmul(hidden, lora.factors(lora.targets[0])[0]))
                hidden = hidden + lowrank_adapted_forward(block, lora, hidden)
                continue
            result = attention_forward(block, hidden)
            attention = result.mean_attention
            if self.sparse_blocks:
                update, codes = adapter_forward(self.sparse_blocks[i], hidden, attention)
                block_codes.append(codes)
            else:
                update = result.output
            if self.adapters:
                mask_i = None if atom_masks is None else atom_masks[i]
                delta, codes = adapter_forward(self.adapters[i], hidden, attention, mask_i)
                coefficients.append(codes)
                attention_maps.append(attention)
                update = update + delta
            hidden = hidden + update
        return SignalForward(
            hidden.sum(axis=-1),
            tuple(coefficients),
            tuple(block_codes),
            tuple(attention_maps),
        )

    def masked_output(self, inputs: tuple[np.ndarray, np.ndarray],
                      masks: Sequence[np.ndarray | None]) -> np.ndarray:
        masked, mask = inputs
        return self.forward(masked, mask, atom_masks=masks).prediction.numpy()

    def adapter_coefficients(self, inputs: tuple[np.ndarray, np.ndarray]) -> list[np.ndarray]:
        masked, mask = inputs
        return [c.numpy() for c in self.forward(masked, mask).coefficients]

    def adapter_attention(self, inputs: tuple[np.ndarray, np.ndarray]) -> list[np.ndarray]:
        masked, mask = inputs
        return [a.numpy() for a in self.forward(masked, mask).attention]

    def sparse_policy(self) -> ActivationPolicy | None:
        return self.sparse_blocks[0].policy if self.sparse_blocks else None

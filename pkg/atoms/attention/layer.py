"""
Multi-head self-attention and its dictionary view.

For head h with column slice c_h:
    A_h = softmax(X W_q[:, c_h] W_k[:, c_h]ᵀ Xᵀ)
    O   = Σ_h A_h X W_v[:, c_h] W_o[:, c_h]ᵀ

No 1/sqrt(d) temperature is applied; initialize() folds it into W_q.
W_o is C_out × C_o so a layer can project to a narrower output width.
"""

from __future__ import annotations

import math
from typing import NamedTuple

from atoms.errors import ContractError, DimensionError
from atoms.rng import SplitMix64
from atoms.tensor import Module, Tensor, concat, matmul, softmax_rows


class AttentionOutput(NamedTuple):
    output: Tensor
    attention: tuple[Tensor, ...]

    @property
    def mean_attention(self) -> Tensor:
        total = self.attention[0]
        for head in self.attention[1:]:
            total = total + head
        return total if len(self.attention) == 1 else total / len(self.attention)


class DictionaryView(NamedTuple):
    coefficients: Tensor
    atoms: Tensor


class AttentionLayer(Module):
    """Projections of one attention block."""

    def __init__(
        self,
        w_q: Tensor,
        w_k: Tensor,
        w_v: Tensor,
        w_o: Tensor,
        num_heads: int = 1,
    ) -> None:
        if not (w_q.shape == w_k.shape == w_v.shape) or w_q.ndim != 2:
            raise DimensionError(
                f"W_q, W_k, W_v must share a C_i x C_o shape, got "
                f"{w_q.shape}, {w_k.shape}, {w_v.shape}"
            )
        if w_o.ndim != 2 or w_o.shape[1] != w_q.shape[1]:
            raise DimensionError(f"W_o must be C_out x {w_q.shape[1]}, got {w_o.shape}")
        if num_heads < 1 or w_q.shape[1] % num_heads:
            raise ContractError(
                f"C_o={w_q.shape[1]} is not divisible by num_heads={num_heads}"
            )
        self.w_q = w_q
        self.w_k = w_k
        self.w_v = w_v
        self.w_o = w_o
        self._num_heads = num_heads

    @classmethod
    def initialize(
        cls,
        rng: SplitMix64,
        in_features: int,
        features: int,
        num_heads: int = 1,
        out_features: int | None = None,
    ) -> AttentionLayer:
        out_features = features if out_features is None else out_features
        head_dim = features // max(num_heads, 1)
        std_in = 1.0 / math.sqrt(in_features)

        def draw(rows: int, cols: int, std: float) -> Tensor:
            return Tensor(rng.normal((rows, cols), std=std), requires_grad=True)

        return cls(
            w_q=draw(in_features, features, std_in / math.sqrt(head_dim)),
            w_k=draw(in_features, features, std_in),
            w_v=draw(in_features, features, std_in),
            w_o=draw(out_features, features, 1.0 / math.sqrt(features)),
            num_heads=num_heads,
        )

    @property
    def num_heads(self) -> int:
        return self._num_heads

    @property
    def in_features(self) -> int:
        return self.w_q.shape[0]

    @property
    def features(self) -> int:
        return self.w_q.shape[1]

    @property
    def out_features(self) -> int:
        return self.w_o.shape[0]

    @property
    def head_dim(self) -> int:
        return self.features // self._num_heads

    @property
    def frozen(self) -> bool:
        return not any(t.requires_grad for _, t in self.named_tensors())

    def head_slices(self) -> list[slice]:
        d = self.head_dim
        return [slice(h * d, (h + 1) * d) for h in range(self._num_heads)]

    def w_vo(self, head: int) -> Tensor:
        """W_v^(h) W_o^(h)ᵀ, the C_i × C_out value-output map of one head."""
        cols = self.head_slices()[head]
        return matmul(self.w_v[:, cols], self.w_o[:, cols].T)


def _check_input(layer_in: int, x: Tensor) -> None:
    if x.ndim < 2 or x.shape[-1] != layer_in:
        raise DimensionError(f"expected (..., N, {layer_in}) input, got {x.shape}")


def attend(
    x: Tensor,
    w_q: Tensor,
    w_k: Tensor,
    w_v: Tensor,
    w_o: Tensor,
    num_heads: int,
) -> AttentionOutput:
    """Multi-head attention on explicit weights (shared by the adapter paths)."""
    _check_input(w_q.shape[0], x)
    head_dim = w_q.shape[1] // num_heads
    maps: list[Tensor] = []
    heads: list[Tensor] = []
    for h in range(num_heads):
        cols = slice(h * head_dim, (h + 1) * head_dim)
        q = matmul(x, w_q[:, cols])
        k = matmul(x, w_k[:, cols])
        v = matmul(x, w_v[:, cols])
        weights = softmax_rows(matmul(q, k.T))
        maps.append(weights)
        heads.append(matmul(weights, v))
    mixed = heads[0] if num_heads == 1 else concat(heads, axis=-1)
    return AttentionOutput(matmul(mixed, w_o.T), tuple(maps))


def attention_forward(layer: AttentionLayer, x: Tensor) -> AttentionOutput:
    return attend(x, layer.w_q, layer.w_k, layer.w_v, layer.w_o, layer.num_heads)


def single_head_forward(layer: AttentionLayer, x: Tensor) -> Tensor:
    """softmax(X W_q W_kᵀ Xᵀ) · X · (W_v W_oᵀ) for a one-head layer."""
    if layer.num_heads != 1:
        raise ContractError("single_head_forward needs num_heads == 1")
    _check_input(layer.in_features, x)
    logits = matmul(matmul(x, matmul(layer.w_q, layer.w_k.T)), x.T)
    return matmul(softmax_rows(logits), matmul(x, layer.w_vo(0)))


def composite_dictionary_view(layer: AttentionLayer, x: Tensor) -> DictionaryView:
    """
    Attention as one coefficients × atoms product.

    coefficients concatenates the head maps along columns (N × NH) and atoms
    stacks X·W_vo^(h) along rows (NH × C_out).
    """
    result = attention_forward(layer, x)
    atoms = [matmul(x, layer.w_vo(h)) for h in range(layer.num_heads)]
    if layer.num_heads == 1:
        return DictionaryView(result.attention[0], atoms[0])
    return DictionaryView(concat(result.attention, axis=-1), concat(atoms, axis=-2))

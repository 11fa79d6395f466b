"""
Sparse dictionary adapter.

Formulation form:    S = σ_λ(A·X·W_s),  ΔO = S·D
Implementation form: S = σ_λ(X·W_s),    ΔO = A·S·D

W_s starts as a small Gaussian and D at zero, so an untrained adapter
leaves the layer output bit-identical.
"""

from __future__ import annotations

from collections.abc import Collection
from typing import NamedTuple

import numpy as np

from atoms.attention.layer import AttentionLayer, attention_forward
from atoms.errors import ContractError, DimensionError
from atoms.rng import SplitMix64
from atoms.schemas import ActivationPolicy, AdapterConfig
from atoms.sparse import apply_activation, atom_importance
from atoms.tensor import DTYPE, Module, Tensor, hadamard, matmul


class AdapterOutput(NamedTuple):
    delta: Tensor
    coefficients: Tensor


class SparseAdapter(Module):
    """Trainable coefficient path W_s and dictionary D with an activation policy."""

    def __init__(
        self,
        w_s: Tensor,
        dictionary: Tensor,
        policy: ActivationPolicy,
        apply_before_attention: bool = True,
    ) -> None:
        if w_s.ndim != 2 or dictionary.ndim != 2 or w_s.shape[1] != dictionary.shape[0]:
            raise DimensionError(
                f"W_s {w_s.shape} and D {dictionary.shape} do not share M"
            )
        if dictionary.shape[0] < 1:
            raise ContractError("dictionary needs at least one atom")
        if policy.k > dictionary.shape[0]:
            raise ContractError(f"k={policy.k} exceeds M={dictionary.shape[0]}")
        self.w_s = w_s
        self.dictionary = dictionary
        self._policy = policy
        self._apply_before_attention = apply_before_attention

    @classmethod
    def initialize(
        cls,
        rng: SplitMix64,
        in_features: int,
        out_features: int,
        config: AdapterConfig,
    ) -> SparseAdapter:
        m = config.dictionary_size
        return cls(
            w_s=Tensor(
                rng.normal((in_features, m), std=config.init_scale),
                requires_grad=True,
            ),
            dictionary=Tensor.zeros(m, out_features, requires_grad=True),
            policy=config.policy(),
            apply_before_attention=config.apply_before_attention,
        )

    @property
    def policy(self) -> ActivationPolicy:
        return self._policy

    @property
    def apply_before_attention(self) -> bool:
        return self._apply_before_attention

    @property
    def dictionary_size(self) -> int:
        return self.dictionary.shape[0]

    @property
    def in_features(self) -> int:
        return self.w_s.shape[0]

    @property
    def out_features(self) -> int:
        return self.dictionary.shape[1]

    def copy(self) -> SparseAdapter:
        return SparseAdapter(
            Tensor(self.w_s.data.copy(), requires_grad=self.w_s.requires_grad),
            Tensor(
                self.dictionary.data.copy(), requires_grad=self.dictionary.requires_grad
            ),
            self._policy,
            self._apply_before_attention,
        )

    def set_trainable(self, *, atoms: bool, coefficients: bool) -> None:
        self.dictionary.requires_grad = atoms
        self.w_s.requires_grad = coefficients
        for tensor, trainable in ((self.dictionary, atoms), (self.w_s, coefficients)):
            if not trainable:
                tensor.grad = None


def atom_mask(size: int, keep: Collection[int]) -> np.ndarray:
    bad = [i for i in keep if not 0 <= i < size]
    if bad:
        raise ContractError(f"atom indices {sorted(bad)} outside [0, {size})")
    mask = np.zeros(size, dtype=DTYPE)
    mask[list(keep)] = 1.0
    return mask


def adapter_forward(
    adapter: SparseAdapter,
    x: Tensor,
    attention: Tensor,
    mask: np.ndarray | None = None,
) -> AdapterOutput:
    """ΔO and the coefficient matrix actually used; mask zeroes atom columns."""
    if x.shape[-1] != adapter.in_features:
        raise DimensionError(
            f"adapter expects C_i={adapter.in_features}, got input {x.shape}"
        )
    tokens = x.shape[-2]
    if attention.shape[-2:] != (tokens, tokens):
        raise DimensionError(
            f"attention {attention.shape} does not match {tokens} tokens"
        )

    projected = matmul(x, adapter.w_s)
    if adapter.apply_before_attention:
        coefficients = apply_activation(projected, adapter.policy)
    else:
        coefficients = apply_activation(matmul(attention, projected), adapter.policy)

    used = coefficients if mask is None else hadamard(coefficients, Tensor(mask))
    delta = matmul(used, adapter.dictionary)
    if adapter.apply_before_attention:
        delta = matmul(attention, delta)
    return AdapterOutput(delta, used)


def adapted_attention_forward(
    layer: AttentionLayer,
    adapter: SparseAdapter,
    x: Tensor,
) -> Tensor:
    """O + ΔO with the adapter fed the head-averaged attention map."""
    result = attention_forward(layer, x)
    delta, _ = adapter_forward(adapter, x, result.mean_attention)
    return result.output + delta


def rank_atoms(coefficients: Tensor | np.ndarray) -> np.ndarray:
    """Atom indices by decreasing aggregate importance, lower index first on ties."""
    importance = atom_importance(coefficients)
    return np.argsort(-importance, kind="stable")


def select_atoms(
    adapter: SparseAdapter,
    coefficients: Tensor,
    keep: Collection[int] | int,
    attention: Tensor | None = None,
) -> Tensor:
    """
    ΔO rebuilt from a subset of atoms.

    keep is either explicit atom indices or a count n, meaning the n atoms
    with the largest column mean of |S|. Implementation-form adapters need
    the attention map to finish the product.
    """
    if isinstance(keep, (int, np.integer)):
        if keep < 0:
            raise ContractError(f"atom count must be >= 0, got {keep}")
        keep = [int(i) for i in rank_atoms(coefficients)[: int(keep)]]
    if coefficients.shape[-1] != adapter.dictionary_size:
        raise DimensionError(
            f"coefficients have {coefficients.shape[-1]} columns, M={adapter.dictionary_size}"
        )
    mask = atom_mask(adapter.dictionary_size, keep)
    delta = matmul(hadamard(coefficients, Tensor(mask)), adapter.dictionary)
    if adapter.apply_before_attention:
        if attention is None:
            raise ContractError("implementation-form adapters need the attention map")
        delta = matmul(attention, delta)
    return delta


def atom_contributions(
    adapter: SparseAdapter,
    coefficients: Tensor,
    attention: Tensor | None = None,
) -> np.ndarray:
    """Per-atom (S column m) ⊗ (D row m) terms, stacked on a leading M axis."""
    s = coefficients.data.astype(np.float64)
    d = adapter.dictionary.data.astype(np.float64)
    terms = np.einsum("...nm,mc->m...nc", s, d)
    if adapter.apply_before_attention:
        if attention is None:
            raise ContractError("implementation-form adapters need the attention map")
        terms = np.matmul(attention.data.astype(np.float64), terms)
    return terms

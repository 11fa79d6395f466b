"""
Per-atom influence maps.

An atom's influence is the output delta obtained by re-running the model
with only that atom of one adapted layer switched on (every other layer's
adapter switched off), minus the output with no adapter at all. The
combined map switches on the whole layer. With a nonlinear decoder the
atom maps do not add up to the combined map; the gap is reported.
"""

from __future__ import annotations

from collections.abc import Sequence
from typing import Any

import numpy as np
import structlog

from atoms.errors import ContractError
from atoms.schemas import AdaptableModel, AtomInfluence, InfluenceReport
from atoms.sparse import NONZERO_THRESHOLD, atom_importance
from atoms.tensor import no_grad

logger = structlog.get_logger(__name__)


def _layer_masks(sizes: Sequence[int], layer: int,
                 active: np.ndarray | None) -> list[np.ndarray | None]:
    masks: list[np.ndarray | None] = [np.zeros(size, dtype=np.float32) for size in sizes]
    masks[layer] = active
    return masks


def atom_influence(
    model: AdaptableModel,
    inputs: Any,
    layer: int,
    atoms: Sequence[int] | None = None,
) -> InfluenceReport:
    if not 0 <= layer < model.num_adapted_layers:
        raise ContractError(
            f"layer {layer} outside [0, {model.num_adapted_layers}) adapted layers"
        )
    with no_grad():
        coefficients = model.adapter_coefficients(inputs)
        sizes = [c.shape[-1] for c in coefficients]
        importance = atom_importance(coefficients[layer])
        silent = np.zeros(sizes[layer], dtype=np.float32)
        baseline = model.masked_output(inputs, _layer_masks(sizes, layer, silent))
        combined = model.masked_output(inputs, _layer_masks(sizes, layer, None)) - baseline

        chosen = range(sizes[layer]) if atoms is None else atoms
        results = []
        for m in chosen:
            if not 0 <= m < sizes[layer]:
                raise ContractError(f"atom {m} outside [0, {sizes[layer]})")
            if importance[m] <= NONZERO_THRESHOLD:
                contribution = np.zeros_like(combined)
            else:
                one_hot = np.zeros(sizes[layer], dtype=np.float32)
                one_hot[m] = 1.0
                contribution = (
                    model.masked_output(inputs, _layer_masks(sizes, layer, one_hot))
                    - baseline
                )
            results.append(AtomInfluence(layer, int(m), contribution, float(importance[m])))

    summed = np.zeros_like(combined)
    for item in results:
        summed = summed + item.contribution
    gap = float(np.abs(combined - summed).max(initial=0.0))
    logger.info(
        "atom_influence_computed", layer=layer, atoms=len(results), additivity_gap=gap
    )
    return InfluenceReport(layer=layer, atoms=tuple(results), combined=combined, additivity_gap=gap)


def atom_mass(coefficients: np.ndarray, dictionary: np.ndarray,
              attention: np.ndarray | None = None) -> np.ndarray:
    """Per-atom Σ|ΔO| mass of the term (S column m) ⊗ (D row m)."""
    s = np.abs(np.asarray(coefficients, dtype=np.float64))
    if attention is not None:
        s = np.abs(np.matmul(np.asarray(attention, dtype=np.float64),
                             np.asarray(coefficients, dtype=np.float64)))
    column = s.reshape(-1, s.shape[-1]).sum(axis=0)
    return column * np.abs(np.asarray(dictionary, dtype=np.float64)).sum(axis=1)


def atoms_for_mass(coefficients: np.ndarray, dictionary: np.ndarray,
                   fraction: float = 0.95, attention: np.ndarray | None = None) -> int:
    """Smallest number of atoms whose terms carry `fraction` of total |ΔO| mass."""
    if not 0.0 < fraction <= 1.0:
        raise ContractError(f"fraction must lie in (0, 1], got {fraction}")
    mass = np.sort(atom_mass(coefficients, dictionary, attention))[::-1]
    total = float(mass.sum())
    if total == 0.0:
        return 0
    reached = np.cumsum(mass) >= fraction * total * (1.0 - 1e-12)
    return int(np.argmax(reached)) + 1

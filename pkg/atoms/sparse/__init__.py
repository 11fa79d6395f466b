from atoms.sparse.activations import (
    NONZERO_THRESHOLD,
    apply_activation,
    shifted_relu,
    soft_threshold,
    top_k_mask,
    top_k_rows,
)
from atoms.sparse.penalties import atom_importance, atom_usage, density, ortho_penalty
from atoms.sparse.solver import ista_solve, lipschitz_estimate, sparse_code_objective

__all__ = [
    "NONZERO_THRESHOLD",
    "apply_activation",
    "atom_importance",
    "atom_usage",
    "density",
    "ista_solve",
    "lipschitz_estimate",
    "ortho_penalty",
    "shifted_relu",
    "soft_threshold",
    "sparse_code_objective",
    "top_k_mask",
    "top_k_rows",
]

from atoms.analysis.cost import cost_report
from atoms.analysis.duel import stability_duel
from atoms.analysis.expansion import (
    check_orthogonal,
    compose_delta,
    expansion_decompose,
    expansion_two_layer,
    supports_disjoint,
    verify_expansion,
)
from atoms.analysis.influence import atom_influence, atom_mass, atoms_for_mass
from atoms.analysis.sweep import TRANSFER_BAND, ablation_sweep, point_config

__all__ = [
    "TRANSFER_BAND",
    "ablation_sweep",
    "atom_influence",
    "atom_mass",
    "atoms_for_mass",
    "check_orthogonal",
    "compose_delta",
    "cost_report",
    "expansion_decompose",
    "expansion_two_layer",
    "point_config",
    "stability_duel",
    "supports_disjoint",
    "verify_expansion",
]

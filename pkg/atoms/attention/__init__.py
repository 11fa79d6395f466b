from atoms.attention.adapter import (
    AdapterOutput,
    SparseAdapter,
    adapted_attention_forward,
    adapter_forward,
    atom_contributions,
    atom_mask,
    rank_atoms,
    select_atoms,
)
from atoms.attention.layer import (
    AttentionLayer,
    AttentionOutput,
    DictionaryView,
    attend,
    attention_forward,
    composite_dictionary_view,
    single_head_forward,
)
from atoms.attention.lowrank import TARGETS, LowRankAdapter, lowrank_adapted_forward

__all__ = [
    "TARGETS",
    "AdapterOutput",
    "AttentionLayer",
    "AttentionOutput",
    "DictionaryView",
    "LowRankAdapter",
    "SparseAdapter",
    "adapted_attention_forward",
    "adapter_forward",
    "atom_contributions",
    "atom_mask",
    "attend",
    "attention_forward",
    "composite_dictionary_view",
    "lowrank_adapted_forward",
    "rank_atoms",
    "select_atoms",
    "single_head_forward",
]

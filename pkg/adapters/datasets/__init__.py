from adapters.datasets.idx import export_dataset, load_exported, load_idx, write_idx

__all__ = ["export_dataset", "load_exported", "load_idx", "write_idx"]

from adapters.reports.writers import (
    HISTORY_COLUMNS,
    MANIFEST_FILE,
    SWEEP_COLUMNS,
    file_checksum,
    write_cost,
    write_history,
    write_influence,
    write_json,
    write_manifest,
    write_matrix,
    write_rows,
    write_summary,
    write_sweep,
    write_usage,
)

__all__ = [
    "HISTORY_COLUMNS",
    "MANIFEST_FILE",
    "SWEEP_COLUMNS",
    "file_checksum",
    "write_cost",
    "write_history",
    "write_influence",
    "write_json",
    "write_manifest",
    "write_matrix",
    "write_rows",
    "write_summary",
    "write_sweep",
    "write_usage",
]

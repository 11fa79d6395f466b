"""
Deterministic CSV / JSON report writers.

Floats are written with repr() so reruns on the same platform produce
byte-identical files.
"""

from __future__ import annotations

import csv
import hashlib
import json
from collections.abc import Iterable, Mapping, Sequence
from pathlib import Path
from typing import Any

import numpy as np
import structlog

from adapters.storage.tensor_file import FORMAT_VERSION
from atoms.schemas import (
    CostReport,
    InfluenceReport,
    RunManifest,
    RunReport,
    SweepRow,
)

logger = structlog.get_logger(__name__)

HISTORY_COLUMNS = ("epoch", "train_loss", "eval_loss", "density")
SWEEP_COLUMNS = ("axis_value", "eval_loss", "transfer_loss", "density")
MANIFEST_FILE = "manifest.json"
REPORT_FORMAT_VERSION = 1


def _cell(value: Any) -> str:
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def _jsonable(value: Any) -> Any:
    if isinstance(value, np.ndarray):
        return [_jsonable(v) for v in value.tolist()]
    if isinstance(value, (np.floating, np.integer)):
        return value.item()
    if isinstance(value, Mapping):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if hasattr(value, "value") and not isinstance(value, (int, float, str, bool)):
        return value.value
    return value


def write_rows(path: Path, columns: Sequence[str], rows: Iterable[Sequence[Any]]) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(columns)
        for row in rows:
            writer.writerow([_cell(v) for v in row])
    return path


def write_json(path: Path, payload: Mapping[str, Any]) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    text = json.dumps(_jsonable(payload), indent=2, sort_keys=True)
    path.write_text(text + "\n", encoding="utf-8")
    return path


def write_history(path: Path, report: RunReport) -> Path:
    return write_rows(path, HISTORY_COLUMNS, (
        (r.epoch, r.train_loss, r.eval_loss, r.density) for r in report.history
    ))


def write_usage(path: Path, report: RunReport) -> Path:
    """Per-epoch atom usage histogram, one column per atom."""
    width = max((len(r.atom_usage) for r in report.history), default=0)
    columns = ["epoch", "active_atoms", *(f"atom_{i}" for i in range(width))]
    return write_rows(path, columns, (
        (r.epoch, r.active_atoms, *r.atom_usage) for r in report.history
    ))


def write_summary(path: Path, report: RunReport) -> Path:
    return write_json(path, report.to_summary())


def write_sweep(path: Path, rows: Sequence[SweepRow]) -> Path:
    ordered = sorted(rows, key=lambda r: r.axis_value)
    return write_rows(path, SWEEP_COLUMNS, (
        (r.axis_value, r.eval_loss, r.transfer_loss, r.density) for r in ordered
    ))


def write_cost(path: Path, report: CostReport) -> Path:
    return write_json(path, report.to_dict())


def write_matrix(path: Path, array: np.ndarray) -> Path:
    """A map flattened to rows × last-axis columns."""
    matrix = np.asarray(array, dtype=np.float64)
    matrix = matrix.reshape(-1, matrix.shape[-1]) if matrix.ndim else matrix.reshape(1, 1)
    columns = [f"c{j}" for j in range(matrix.shape[1])]
    return write_rows(path, columns, (tuple(float(v) for v in row) for row in matrix))


def write_influence(directory: Path, report: InfluenceReport) -> list[Path]:
    payload = {
        "layer": report.layer,
        "additivity_gap": report.additivity_gap,
        "shape": list(report.combined.shape),
        "atoms": [
            {
                "layer": atom.layer,
                "atom": atom.atom,
                "importance": atom.importance,
                "map": atom.contribution.reshape(-1).astype(np.float64),
            }
            for atom in report.atoms
        ],
    }
    paths = [write_json(directory / f"influence_layer{report.layer}.json", payload)]
    paths.append(write_matrix(directory / f"influence_layer{report.layer}_combined.csv",
                              report.combined))
    for atom in report.atoms:
        paths.append(write_matrix(
            directory / f"influence_layer{report.layer}_atom{atom.atom}.csv",
            atom.contribution,
        ))
    return paths


def file_checksum(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def write_manifest(
    directory: Path,
    command: str,
    seed: int,
    config: Mapping[str, Any],
    files: Iterable[Path] = (),
) -> RunManifest:
    """Checksum every output under directory and write manifest.json beside them."""
    directory = Path(directory)
    checksums = {
        path.relative_to(directory).as_posix(): file_checksum(path)
        for path in sorted(set(files))
        if path.is_file() and path.name != MANIFEST_FILE
    }
    manifest = RunManifest(
        command=command,
        seed=seed,
        config=_jsonable(config),
        files=checksums,
        format_versions={"atns": FORMAT_VERSION, "report": REPORT_FORMAT_VERSION},
    )
    write_json(directory / MANIFEST_FILE, manifest.to_dict())
    logger.info("manifest_written", path=str(directory / MANIFEST_FILE), files=len(checksums))
    return manifest

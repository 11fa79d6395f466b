"""
Experiment config files: flat KEY=value lines, one field per key.

    # low-band pre-training
    stage=pretrain_signal
    freq_band=0..24
    betas=0.9,0.999
"""

from pathlib import Path
from typing import Any

from dotenv import dotenv_values

from atoms.errors import ConfigError


def read_config_file(path: Path) -> dict[str, str]:
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    values = dotenv_values(path, interpolate=False)
    empty = sorted(key for key, value in values.items() if value is None)
    if empty:
        raise ConfigError(f"{path}: keys without a value: {empty}")
    return {key: value for key, value in values.items() if value is not None}


def resolve_config(
    path: Path | None,
    seed: int | None,
    default_seed: int,
) -> dict[str, Any]:
    """File values with the seed precedence --seed > file > ATOMS_DEFAULT_SEED."""
    values: dict[str, Any] = dict(read_config_file(path)) if path is not None else {}
    if seed is not None:
        values["seed"] = seed
    values.setdefault("seed", default_seed)
    return values

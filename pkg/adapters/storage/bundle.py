"""
Adapter bundles: a directory holding W_s and D as ATNS tensors plus a
KEY=value metadata file.
"""

from __future__ import annotations

from pathlib import Path

import structlog
from dotenv import dotenv_values

from adapters.storage.tensor_file import FORMAT_VERSION, read_tensor, write_tensor
from atoms.attention import SparseAdapter
from atoms.errors import FormatError
from atoms.schemas import ActivationKind, ActivationPolicy
from atoms.tensor import Tensor

logger = structlog.get_logger(__name__)

W_S_FILE = "w_s.atns"
DICTIONARY_FILE = "dictionary.atns"
METADATA_FILE = "adapter.meta"

_REQUIRED = ("dictionary_size", "activation", "form", "in_features", "out_features")


def _metadata(adapter: SparseAdapter) -> dict[str, str]:
    policy = adapter.policy
    meta = {
        "format_version": str(FORMAT_VERSION),
        "dictionary_size": str(adapter.dictionary_size),
        "activation": policy.kind.value,
        "form": "implementation" if adapter.apply_before_attention else "formulation",
        "in_features": str(adapter.in_features),
        "out_features": str(adapter.out_features),
    }
    if policy.kind is ActivationKind.TOP_K:
        meta["k"] = str(policy.k)
    else:
        meta["lambda"] = repr(policy.lam)
    return meta


def save_bundle(directory: Path, adapter: SparseAdapter) -> Path:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    write_tensor(directory / W_S_FILE, adapter.w_s.numpy())
    write_tensor(directory / DICTIONARY_FILE, adapter.dictionary.numpy())
    lines = [f"{key}={value}" for key, value in _metadata(adapter).items()]
    (directory / METADATA_FILE).write_text("\n".join(lines) + "\n", encoding="utf-8")
    logger.info("adapter_bundle_saved", path=str(directory), m=adapter.dictionary_size)
    return directory


def load_bundle(directory: Path, trainable: bool = False) -> SparseAdapter:
    directory = Path(directory)
    meta_path = directory / METADATA_FILE
    if not meta_path.exists():
        raise FileNotFoundError(f"adapter metadata not found: {meta_path}")
    meta = {k: v for k, v in dotenv_values(meta_path).items() if v is not None}
    missing = [key for key in _REQUIRED if key not in meta]
    if missing:
        raise FormatError(f"{meta_path} lacks keys {missing}")

    try:
        kind = ActivationKind(meta["activation"])
        if kind is ActivationKind.TOP_K:
            policy = ActivationPolicy.top_k(int(meta["k"]))
        else:
            policy = ActivationPolicy(kind, lam=float(meta["lambda"]))
        m = int(meta["dictionary_size"])
        shape_in, shape_out = int(meta["in_features"]), int(meta["out_features"])
    except (KeyError, ValueError) as exc:
        raise FormatError(f"{meta_path}: {exc}") from exc
    if meta["form"] not in ("implementation", "formulation"):
        raise FormatError(f"{meta_path}: unknown form {meta['form']!r}")

    w_s = read_tensor(directory / W_S_FILE)
    dictionary = read_tensor(directory / DICTIONARY_FILE)
    if w_s.shape != (shape_in, m) or dictionary.shape != (m, shape_out):
        raise FormatError(
            f"bundle tensors {w_s.shape}, {dictionary.shape} contradict "
            f"C_i={shape_in}, M={m}, C_o={shape_out}"
        )
    return SparseAdapter(
        Tensor(w_s, requires_grad=trainable),
        Tensor(dictionary, requires_grad=trainable),
        policy,
        apply_before_attention=meta["form"] == "implementation",
    )

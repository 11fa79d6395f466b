from adapters.storage.bundle import load_bundle, save_bundle
from adapters.storage.memory import InMemoryTensorStore
from adapters.storage.tensor_file import (
    FileTensorStore,
    decode_tensor,
    encode_tensor,
    read_tensor,
    write_tensor,
)

__all__ = [
    "FileTensorStore",
    "InMemoryTensorStore",
    "decode_tensor",
    "encode_tensor",
    "load_bundle",
    "read_tensor",
    "save_bundle",
    "write_tensor",
]

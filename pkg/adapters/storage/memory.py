"""
In-memory tensor store for tests and throwaway runs.
"""

import numpy as np

from atoms.schemas import TensorStorePort


class InMemoryTensorStore(TensorStorePort):
    """Simple dictionary-based storage; arrays are copied on the way in and out."""

    def __init__(self) -> None:
        self._storage: dict[str, np.ndarray] = {}

    def get(self, key: str) -> np.ndarray:
        if key not in self._storage:
            raise FileNotFoundError(f"Tensor not found: {key}")
        return self._storage[key].copy()

    def put(self, key: str, array: np.ndarray) -> None:
        self._storage[key] = np.array(array, dtype=np.float32, copy=True)

    def exists(self, key: str) -> bool:
        return key in self._storage

    def list_keys(self, prefix: str = "") -> list[str]:
        return sorted(k for k in self._storage if k.startswith(prefix))

    def delete(self, key: str) -> None:
        self._storage.pop(key, None)

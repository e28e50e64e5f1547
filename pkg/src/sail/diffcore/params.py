from __future__ import annotations

from collections.abc import Mapping
from typing import Callable, Iterator

import numpy as np


class ParamSet(Mapping):
    """Immutable name -> float64 array map, iterated in lexicographic order.

    Arrays are copied on construction and marked read-only, so a ParamSet can
    be shared freely; updates produce a new ParamSet.
    """

    def __init__(self, arrays: Mapping[str, np.ndarray] | None = None):
        items = {}
        for name in sorted(arrays or {}):
            a = np.array(arrays[name], dtype=np.float64)
            a.setflags(write=False)
            items[name] = a
        self._items = items

    def __getitem__(self, name: str) -> np.ndarray:
        return self._items[name]

    def __iter__(self) -> Iterator[str]:
        return iter(self._items)

    def __len__(self) -> int:
        return len(self._items)

    def __repr__(self):
        body = ", ".join(f"{k}: {v.shape}" for k, v in self._items.items())
        return f"ParamSet({body})"

    @property
    def size(self) -> int:
        return int(sum(a.size for a in self._items.values()))

    def shapes(self) -> dict[str, tuple]:
        return {k: v.shape for k, v in self._items.items()}

    def flat(self) -> np.ndarray:
        if not self._items:
            return np.zeros(0)
        return np.concatenate([a.ravel() for a in self._items.values()])

    def unflat(self, vec: np.ndarray) -> "ParamSet":
        vec = np.asarray(vec, dtype=np.float64)
        if vec.size != self.size:
            raise ValueError(f"flat vector has {vec.size} entries, expected {self.size}")
        out, pos = {}, 0
        for name, a in self._items.items():
            out[name] = vec[pos : pos + a.size].reshape(a.shape)
            pos += a.size
        return ParamSet(out)

    def map(self, fn: Callable[[np.ndarray], np.ndarray]) -> "ParamSet":
        return ParamSet({k: fn(v) for k, v in self._items.items()})

    def zeros_like(self) -> "ParamSet":
        return self.map(np.zeros_like)

    def merge(self, other: Mapping[str, np.ndarray]) -> "ParamSet":
        """Union of two disjoint sets (e.g. encoder + discriminator)."""
        clash = set(self._items) & set(other)
        if clash:
            raise ValueError(f"duplicate parameter names: {sorted(clash)}")
        return ParamSet({**self._items, **dict(other)})

    def subset(self, prefix: str) -> "ParamSet":
        return ParamSet({k: v for k, v in self._items.items() if k.startswith(prefix)})

    def replace(self, updates: Mapping[str, np.ndarray]) -> "ParamSet":
        for k, v in updates.items():
            if k not in self._items:
                raise KeyError(k)
            if np.shape(v) != self._items[k].shape:
                raise ValueError(f"shape change for {k}: {self._items[k].shape} -> {np.shape(v)}")
        return ParamSet({**self._items, **dict(updates)})

    def equal(self, other: "ParamSet") -> bool:
        return list(self) == list(other) and all(
            np.array_equal(self[k], other[k]) for k in self
        )

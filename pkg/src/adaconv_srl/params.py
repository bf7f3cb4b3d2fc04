"""Named parameter store with seeded initialization."""

from __future__ import annotations

from typing import Iterator

import numpy as np

from .autograd import Parameter


def splitmix64(x: int) -> int:
    x = (x + 0x9E3779B97F4A7C15) & 0xFFFFFFFFFFFFFFFF
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & 0xFFFFFFFFFFFFFFFF
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & 0xFFFFFFFFFFFFFFFF
    return x ^ (x >> 31)


def derive_seed(*parts: int) -> int:
    """Deterministic 64-bit seed from a sequence of integers."""
    h = 0
    for p in parts:
        h = splitmix64(h ^ (int(p) & 0xFFFFFFFFFFFFFFFF))
    return h


class ParamStore:
    """Ordered mapping name -> Parameter; initialization draws are seeded."""

    def __init__(self, seed: int, std: float = 0.1):
        self.rng = np.random.Generator(np.random.PCG64(seed))
        self.std = std
        self._params: dict = {}

    def _put(self, p: Parameter) -> Parameter:
        if p.name in self._params:
            raise KeyError(f"duplicate parameter name {p.name!r}")
        self._params[p.name] = p
        return p

    def normal(self, name: str, shape, std: float | None = None) -> Parameter:
        s = self.std if std is None else std
        return self._put(Parameter(name, self.rng.normal(0.0, s, size=shape)))

    def const(self, name: str, shape, value: float = 0.0) -> Parameter:
        return self._put(Parameter(name, np.full(shape, float(value))))

    def frozen(self, name: str, value: np.ndarray) -> Parameter:
        return self._put(Parameter(name, value, trainable=False))

    def __getitem__(self, name: str) -> Parameter:
        return self._params[name]

    def __contains__(self, name: str) -> bool:
        return name in self._params

    def __iter__(self) -> Iterator[Parameter]:
        return iter(self._params.values())

    def __len__(self) -> int:
        return len(self._params)

    def names(self) -> list:
        return list(self._params)

    def trainable(self) -> list:
        return [p for p in self._params.values() if p.trainable]

    def with_prefix(self, prefix: str) -> list:
        return [p for n, p in self._params.items() if n.startswith(prefix)]

    def count(self, prefix: str = "", trainable_only: bool = True) -> int:
        return int(np.sum([p.size for n, p in self._params.items()
                           if n.startswith(prefix) and (p.trainable or not trainable_only)]))

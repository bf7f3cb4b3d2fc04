"""Context attention and input-conditioned filter generation (full / hashed)."""

from __future__ import annotations

import numpy as np

from . import autograd as ag
from .autograd import ShapeError, Tensor
from .params import ParamStore, derive_seed, splitmix64

_MASK = 0xFFFFFFFFFFFFFFFF
CONTEXT_MODES = ("per_position", "per_sentence")


def context_vectors(H: Tensor, q: Tensor, mode: str = "per_position") -> Tensor:
    """Self-attended context vectors.

    ``a = softmax(H q)``. Per position: ``c_k = a_k * h_k`` (m x d).
    Per sentence: a single ``sum_k a_k h_k`` (1 x d).
    """
    if H.ndim != 2 or q.shape != (H.shape[1],):
        raise ShapeError("context_vectors", H.shape, q.shape)
    a = ag.softmax(ag.matmul(H, q))
    if mode == "per_position":
        return ag.mul(H, ag.reshape(a, (H.shape[0], 1)))
    if mode == "per_sentence":
        return ag.reshape(ag.matmul(a, H), (1, H.shape[1]))
    raise ValueError(f"unknown context mode {mode!r}")


def attention_weights(H: Tensor, q: Tensor) -> Tensor:
    return ag.softmax(ag.matmul(H, q))


def generate_filters_full(c: Tensor, W: Tensor) -> Tensor:
    """``f_i = W_i c`` for every filter.

    ``W`` is (n, s*d, g); ``c`` is one context (g,) -> (n, s*d), or a batch
    (P, g) -> (P, n, s*d).
    """
    if W.ndim != 3 or c.shape[-1] != W.shape[2] or c.ndim not in (1, 2):
        raise ShapeError("generate_filters_full", c.shape, W.shape)
    if c.ndim == 1:
        return ag.einsum("nqg,g->nq", W, c)
    return ag.einsum("nqg,pg->pnq", W, c)


def hash_bucket(j: int, filter_id: int, seed: int, l: int) -> int:
    """Pool row (1..l) that hash function ``j`` assigns to ``filter_id``."""
    if l < 1:
        raise ValueError("pool size must be >= 1")
    h = splitmix64((seed & _MASK) ^ splitmix64((j & _MASK) ^ splitmix64(filter_id & _MASK)))
    return h % l + 1


def bucket_table(n: int, z: int, seed: int, l: int) -> np.ndarray:
    """0-based pool rows, shape (n, z): entry [i, j] = D_{j+1}(i+1) - 1."""
    return np.array([[hash_bucket(j, i, seed, l) - 1 for j in range(1, z + 1)]
                     for i in range(1, n + 1)], dtype=np.int64)


def generate_filters_hashed(c: Tensor, w: Tensor, E: Tensor, buckets: np.ndarray) -> Tensor:
    """``f_i = sum_j (w_ij . c) E[D_j(i)]``.

    ``w`` is (n, z, g) importance weights, ``E`` the shared (l, s*d) pool and
    ``buckets`` the (n, z) 0-based pool rows.
    """
    n, z, g = w.shape
    if buckets.shape != (n, z) or c.shape[-1] != g or E.ndim != 2 or c.ndim not in (1, 2):
        raise ShapeError("generate_filters_hashed", c.shape, w.shape, E.shape, buckets.shape)
    comp = ag.take(E, buckets)  # (n, z, s*d)
    if c.ndim == 1:
        p = ag.einsum("nzg,g->nz", w, c)
        return ag.einsum("nz,nzq->nq", p, comp)
    p = ag.einsum("nzg,pg->pnz", w, c)
    return ag.einsum("pnz,nzq->pnq", p, comp)


def importance(c: Tensor, w: Tensor) -> Tensor:
    return ag.einsum("nzg,g->nz", w, c)


class FullGenerator:
    def __init__(self, store: ParamStore, name: str, n: int, s: int, d: int, g: int):
        self.n, self.s, self.d, self.g = n, s, d, g
        self.W = store.normal(f"{name}.W", (n, s * d, g))

    @property
    def tensors(self) -> list:
        return [self.W]

    def __call__(self, c: Tensor) -> Tensor:
        return generate_filters_full(c, ag.param(self.W))


class HashedGenerator:
    def __init__(self, store: ParamStore, name: str, n: int, s: int, d: int, g: int,
                 l: int, z: int, seed: int):
        if l < 1 or z < 1:
            raise ValueError("hashed generation needs l >= 1 and z >= 1")
        self.n, self.s, self.d, self.g, self.l, self.z = n, s, d, g, l, z
        self.seed = seed
        self.buckets = bucket_table(n, z, seed, l)
        self.w = store.normal(f"{name}.w", (n, z, g))
        self.E = store.normal(f"{name}.E", (l, s * d))

    @property
    def tensors(self) -> list:
        return [self.w, self.E]

    def __call__(self, c: Tensor) -> Tensor:
        return generate_filters_hashed(c, ag.param(self.w), ag.param(self.E), self.buckets)


def group_seed(hash_seed: int, block: int, group: int) -> int:
    return derive_seed(hash_seed, block, group) & 0x7FFFFFFFFFFFFFFF

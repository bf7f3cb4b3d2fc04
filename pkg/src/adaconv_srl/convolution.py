"""Adaptive convolution, pooling over windows, and CNN / DPCNN / DenseCNN stacks."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import autograd as ag
from . import kernels
from .autograd import ShapeError, Tensor
from .filters import CONTEXT_MODES, FullGenerator, HashedGenerator, context_vectors, group_seed
from .params import ParamStore

VARIANTS = ("cnn", "dpcnn", "densecnn")
GENERATION_MODES = ("full", "hashed", "static")
ACTIVATIONS = {"relu": ag.relu, "tanh": ag.tanh, "identity": lambda x: x}


@dataclass
class ConvBlockConfig:
    variant: str = "cnn"
    groups: list = field(default_factory=lambda: [(100, 3), (100, 4), (100, 5)])
    depth: int = 1
    generation: str = "full"
    activation: str = "relu"
    pool_size: int = 20  # l
    importance: int = 5  # z
    context_mode: str = "per_position"
    pad_length: int = 0
    hash_seed: int = 0

    def validate(self) -> None:
        if self.variant not in VARIANTS:
            raise ValueError(f"variant must be one of {VARIANTS}, got {self.variant!r}")
        if self.generation not in GENERATION_MODES:
            raise ValueError(f"generation must be one of {GENERATION_MODES}, got {self.generation!r}")
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"activation must be one of {tuple(ACTIVATIONS)}")
        if self.context_mode not in CONTEXT_MODES:
            raise ValueError(f"context_mode must be one of {CONTEXT_MODES}")
        if self.depth < 1:
            raise ValueError("depth must be >= 1")
        if self.pool_size < 1:
            raise ValueError("pool size l must be >= 1")
        if self.importance < 1:
            raise ValueError("importance count z must be >= 1")
        if not self.groups:
            raise ValueError("at least one filter group is required")
        for n, s in self.groups:
            if n < 1 or s < 1:
                raise ValueError(f"filter group ({n}, {s}) needs count >= 1 and window >= 1")
        if self.variant != "cnn" and len(self.groups) != 1:
            raise ValueError(f"{self.variant} uses a single filter group per block")


# --------------------------------------------------------------------------
# convolution primitives
# --------------------------------------------------------------------------


def adaptive_convolve(H: Tensor, bank: Tensor, s: int, activation: str = "relu") -> Tensor:
    """Window features ``phi(f_i . [h_j; ..; h_{j+s-1}])``: (m - s + 1) x n."""
    if H.ndim != 2 or bank.ndim != 2 or bank.shape[1] != s * H.shape[1]:
        raise ShapeError("adaptive_convolve", H.shape, bank.shape, (s,))
    windows = ag.unfold(H, s)
    return ACTIVATIONS[activation](ag.matmul(windows, ag.transpose(bank)))


def max_pool_over_time(features: Tensor) -> Tensor:
    """Columnwise maximum; ties go to the earliest row."""
    if features.ndim != 2 or features.shape[0] == 0:
        raise ShapeError("max_pool_over_time", features.shape)
    return ag.max(features, axis=0)


def conv_max_pool(F: Tensor, windows: Tensor) -> Tensor:
    """Fused ``max_w F[p, i] . windows[w]`` for a stack of filter banks.

    ``F`` is (P, n, q), ``windows`` (nw, q); the result (P, n) is taken
    before the activation, which is applied separately (it is monotone, so
    pooling commutes with it).
    """
    if F.ndim != 3 or windows.ndim != 2 or F.shape[2] != windows.shape[1] or windows.shape[0] == 0:
        raise ShapeError("conv_max_pool", F.shape, windows.shape)
    Fv = np.ascontiguousarray(F.value)
    Wv = np.ascontiguousarray(windows.value)
    out, arg = kernels.conv_pool_forward(Fv, Wv)
    return ag.record(out, (F, windows), lambda g: kernels.conv_pool_backward(
        np.ascontiguousarray(g), Fv, Wv, arg))


def pad_to_window(X: Tensor, s: int) -> Tensor:
    """Symmetric zero padding so that at least one window of size ``s`` fits."""
    m = X.shape[0]
    if m >= s:
        return X
    extra = s - m
    return ag.pad_rows(X, extra // 2, extra - extra // 2)


# --------------------------------------------------------------------------
# blocks
# --------------------------------------------------------------------------


class ConvBlock:
    """One convolution block over an (m x d_in) input.

    Adaptive modes generate a filter bank per context vector, slide it over
    the whole sequence and max-pool, giving one row per position. Static
    mode is the non-adaptive baseline: learned filters applied to the
    window centred at each position.
    """

    def __init__(self, store: ParamStore, name: str, d_in: int, groups, cfg: ConvBlockConfig,
                 block_index: int):
        self.d_in = d_in
        self.groups = [tuple(g) for g in groups]
        self.cfg = cfg
        self.name = name
        self.generators = []
        self.static = []
        self.q = None
        if cfg.generation == "static":
            for gi, (n, s) in enumerate(self.groups):
                self.static.append(store.normal(f"{name}.g{gi}.filters", (n, s * d_in)))
            return
        self.q = store.normal(f"{name}.q", (d_in,))
        for gi, (n, s) in enumerate(self.groups):
            gname = f"{name}.g{gi}"
            if cfg.generation == "full":
                self.generators.append(FullGenerator(store, gname, n, s, d_in, d_in))
            else:
                seed = group_seed(cfg.hash_seed, block_index, gi)
                self.generators.append(HashedGenerator(store, gname, n, s, d_in, d_in,
                                                       cfg.pool_size, cfg.importance, seed))

    @property
    def n_out(self) -> int:
        return sum(n for n, _ in self.groups)

    @property
    def generator_tensors(self) -> list:
        if self.static:
            return list(self.static)
        return [t for g in self.generators for t in g.tensors]

    def __call__(self, X: Tensor) -> Tensor:
        if X.ndim != 2 or X.shape[1] != self.d_in:
            raise ShapeError(f"{self.name}", X.shape, (None, self.d_in))
        phi = ACTIVATIONS[self.cfg.activation]
        m = X.shape[0]
        outs = []
        if self.static:
            for (n, s), filt in zip(self.groups, self.static):
                left = (s - 1) // 2
                Xp = ag.pad_rows(X, left, s - 1 - left)
                outs.append(phi(ag.linear(ag.unfold(Xp, s), ag.param(filt))))
        else:
            smax = max(s for _, s in self.groups)
            Xp = pad_to_window(X, smax)
            C = context_vectors(X, ag.param(self.q), self.cfg.context_mode)
            for (n, s), gen in zip(self.groups, self.generators):
                pooled = phi(conv_max_pool(gen(C), ag.unfold(Xp, s)))
                if pooled.shape[0] != m:  # one bank per sentence
                    pooled = ag.gather_rows(pooled, np.zeros(m, dtype=np.int64))
                outs.append(pooled)
        return outs[0] if len(outs) == 1 else ag.concat(outs, axis=1)


def run_block(H: Tensor, block: ConvBlock) -> Tensor:
    return block(H)


def block_layout(cfg: ConvBlockConfig, d: int) -> list:
    """(input width, groups) for each block of the configured stack."""
    if cfg.variant == "cnn":
        return [(d, list(cfg.groups))]
    n = cfg.groups[0][0]
    if cfg.variant == "dpcnn":
        return [(d if t == 0 else n, list(cfg.groups)) for t in range(cfg.depth)]
    return [(d + t * n, list(cfg.groups)) for t in range(cfg.depth)]


class ConvStack:
    def __init__(self, store: ParamStore, d: int, cfg: ConvBlockConfig, prefix: str = "conv"):
        cfg.validate()
        self.cfg = cfg
        self.d = d
        self.blocks = [ConvBlock(store, f"{prefix}.b{t}", d_in, groups, cfg, t)
                       for t, (d_in, groups) in enumerate(block_layout(cfg, d))]
        self.shortcut = None
        if cfg.variant == "dpcnn":
            self.shortcut = store.normal(f"{prefix}.shortcut", (self.blocks[0].n_out, d))

    @property
    def n_out(self) -> int:
        return self.blocks[-1].n_out

    @property
    def generator_tensors(self) -> list:
        return [t for b in self.blocks for t in b.generator_tensors]

    def pad_length_for(self, m: int) -> int:
        return max(self.cfg.pad_length, m)

    def __call__(self, H: Tensor) -> Tensor:
        v = self.cfg.variant
        if v == "cnn":
            return self.blocks[0](H)
        if v == "dpcnn":
            x = H
            for t, block in enumerate(self.blocks):
                skip = ag.linear(x, ag.param(self.shortcut)) if t == 0 else x
                x = ag.add(block(x), skip)
            return x
        m = H.shape[0]
        L = self.pad_length_for(m)
        inputs = [ag.pad_rows(H, 0, L - m)]
        out = None
        for block in self.blocks:
            x = inputs[0] if len(inputs) == 1 else ag.concat(inputs, axis=1)
            out = block(x)
            inputs.append(out)
        return out if L == m else ag.window(out, 0, m)


def run_stack(H: Tensor, stack: ConvStack) -> Tensor:
    return stack(H)


# --------------------------------------------------------------------------
# parameter accounting
# --------------------------------------------------------------------------


@dataclass
class ParamReport:
    static: int
    full: int
    hashed: int

    def as_dict(self) -> dict:
        return {"static": self.static, "full": self.full, "hashed": self.hashed}


def param_count(cfg: ConvBlockConfig, d: int) -> ParamReport:
    """Filter-producing parameters of the stack, per generation mode.

    static: n*s*d, full: n*s*d*g, hashed: n*z*g + l*s*d per bank, with
    g = d (the block's input width), summed over blocks and groups.
    """
    cfg.validate()
    static = full = hashed = 0
    for d_in, groups in block_layout(cfg, d):
        g = d_in
        for n, s in groups:
            static += n * s * d_in
            full += n * s * d_in * g
            hashed += n * cfg.importance * g + cfg.pool_size * s * d_in
    return ParamReport(static, full, hashed)

"""Highway MLP tagging head and the cross-entropy loss."""

from __future__ import annotations

import numpy as np

from . import autograd as ag
from .autograd import ShapeError, Tensor
from .params import ParamStore

PROB_FLOOR = 1e-12


class HighwayMlp:
    """Entry projection, ``layers`` highway layers, output projection, softmax.

    Each layer: ``t = sigmoid(W_t x + b_t)``, ``y = t * relu(W x + b) + (1 - t) * x``.
    """

    def __init__(self, store: ParamStore, input_dim: int, hidden: int, n_out: int,
                 layers: int = 10, prefix: str = "mlp", carry_bias: float = -1.0):
        self.input_dim = input_dim
        self.hidden = hidden
        self.entry_W = store.normal(f"{prefix}.entry.W", (hidden, input_dim))
        self.entry_b = store.const(f"{prefix}.entry.b", (hidden,))
        self.layers = []
        for k in range(layers):
            self.layers.append((
                store.normal(f"{prefix}.l{k}.W_t", (hidden, hidden)),
                store.const(f"{prefix}.l{k}.b_t", (hidden,), carry_bias),
                store.normal(f"{prefix}.l{k}.W", (hidden, hidden)),
                store.const(f"{prefix}.l{k}.b", (hidden,)),
            ))
        self.out_W = store.normal(f"{prefix}.out.W", (n_out, hidden))
        self.out_b = store.const(f"{prefix}.out.b", (n_out,))

    def logits(self, x: Tensor) -> Tensor:
        if x.shape[-1] != self.input_dim:
            raise ShapeError("highway_mlp", x.shape, (self.input_dim,))
        h = ag.linear(x, ag.param(self.entry_W), ag.param(self.entry_b))
        for Wt, bt, W, b in self.layers:
            t = ag.sigmoid(ag.linear(h, ag.param(Wt), ag.param(bt)))
            y = ag.relu(ag.linear(h, ag.param(W), ag.param(b)))
            h = ag.add(h, ag.mul(t, ag.sub(y, h)))  # t*y + (1-t)*h
        return ag.linear(h, ag.param(self.out_W), ag.param(self.out_b))

    def __call__(self, x: Tensor) -> Tensor:
        return ag.softmax(self.logits(x))


def highway_mlp_forward(feature: Tensor, mlp: HighwayMlp) -> Tensor:
    return mlp(feature)


class ClampCounter:
    """Counts gold probabilities that had to be raised to the floor."""

    def __init__(self):
        self.count = 0

    def reset(self) -> None:
        self.count = 0


clamp_counter = ClampCounter()


def nll_loss(probs: Tensor, gold, mask=None) -> Tensor:
    """Mean of ``-log p[gold]`` over unmasked rows.

    ``probs`` is (m, |A|) (or a single distribution); ``mask`` marks rows
    that count (padding rows are excluded). Gold probabilities below 1e-12
    are clamped and counted in ``clamp_counter``.
    """
    P = probs.value if probs.ndim == 2 else probs.value[None, :]
    gold = np.atleast_1d(np.asarray(gold, dtype=np.int64))
    if gold.shape != (P.shape[0],) or gold.min(initial=0) < 0 or gold.max(initial=0) >= P.shape[1]:
        raise ShapeError("loss", probs.shape, gold.shape)
    rows = np.arange(P.shape[0]) if mask is None else np.flatnonzero(np.asarray(mask, dtype=bool))
    if rows.size == 0:
        raise ValueError("loss over zero tokens")
    picked = P[rows, gold[rows]]
    low = picked < PROB_FLOOR
    if low.any():
        clamp_counter.count += int(low.sum())
    clamped = np.where(low, PROB_FLOOR, picked)
    value = -np.log(clamped).mean()
    shape = probs.shape
    n = rows.size

    def rule(g):
        full = np.zeros(P.shape)
        full[rows, gold[rows]] = np.where(low, 0.0, -g / (n * clamped))
        return (full.reshape(shape),)

    return ag.record(np.asarray(value), (probs,), rule)


loss = nll_loss

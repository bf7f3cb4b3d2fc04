"""
Dense tensors with tape-based reverse-mode differentiation, plus Adam.

Every model component is written against the primitives in this module.
A forward pass runs inside ``with Tape() as tape:``; each primitive whose
inputs require gradients appends a node (output, parents, backward rule)
to the active tape. ``backward(loss, tape)`` replays the rules in reverse
and accumulates the result into each ``Parameter.grad``.

All arithmetic is float64.
"""

from __future__ import annotations

import builtins
import threading
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np


class ShapeError(ValueError):
    """Operand shapes do not conform for a primitive."""

    def __init__(self, primitive: str, *shapes):
        self.primitive = primitive
        self.shapes = tuple(None if s is None else tuple(s) for s in shapes)
        desc = " vs ".join(str(s) for s in self.shapes)
        super().__init__(f"{primitive}: incompatible shapes {desc}")


class TapeError(RuntimeError):
    pass


class NonFiniteError(FloatingPointError):
    pass


class Tensor:
    """A float64 array that may take part in differentiation.

    ``value`` is a numpy array (row-major); ``grad`` is filled by
    ``backward`` for tensors that require gradients.
    """

    __slots__ = ("value", "grad", "requires_grad", "param")

    def __init__(self, value, requires_grad: bool = False, param: "Parameter | None" = None):
        self.value = np.asarray(value, dtype=np.float64)
        self.grad = None
        self.requires_grad = requires_grad
        self.param = param

    @property
    def shape(self) -> tuple:
        return self.value.shape

    @property
    def ndim(self) -> int:
        return self.value.ndim

    def item(self) -> float:
        return float(self.value)

    def numpy(self) -> np.ndarray:
        return self.value

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"

    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __neg__(self):
        return scale(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, index):
        return take(self, index)


@dataclass(eq=False)
class Parameter:
    """A named trainable (or frozen) array with a gradient buffer."""

    name: str
    value: np.ndarray
    trainable: bool = True
    grad: np.ndarray = field(init=False)

    def __post_init__(self):
        self.value = np.ascontiguousarray(self.value, dtype=np.float64)
        self.grad = np.zeros_like(self.value)

    @property
    def shape(self) -> tuple:
        return self.value.shape

    @property
    def size(self) -> int:
        return int(self.value.size)

    def zero_grad(self) -> None:
        self.grad.fill(0.0)


@dataclass
class _Node:
    out: Tensor
    parents: tuple
    backward: Callable


_local = threading.local()


def _stack() -> list:
    st = getattr(_local, "stack", None)
    if st is None:
        st = _local.stack = []
    return st


def active_tape() -> "Tape | None":
    st = _stack()
    return st[-1] if st else None


class Tape:
    """Ordered record of the primitives applied during one forward pass.

    A tape is confined to the thread that created it and can be consumed
    by ``backward`` exactly once.
    """

    def __init__(self):
        self.nodes: list[_Node] = []
        self.consumed = False
        self._leaves: dict[int, Tensor] = {}

    def __enter__(self) -> "Tape":
        _stack().append(self)
        return self

    def __exit__(self, *exc) -> None:
        st = _stack()
        if st and st[-1] is self:
            st.pop()

    def watch(self, param: Parameter) -> Tensor:
        """Leaf tensor bound to ``param``; one leaf per parameter per tape."""
        leaf = self._leaves.get(id(param))
        if leaf is None:
            leaf = Tensor(param.value, requires_grad=param.trainable, param=param)
            self._leaves[id(param)] = leaf
        return leaf

    @property
    def leaves(self) -> list[Tensor]:
        return list(self._leaves.values())

    def __len__(self) -> int:
        return len(self.nodes)


def param(p: Parameter) -> Tensor:
    """Bring a parameter into the active tape (or wrap it as a constant)."""
    tape = active_tape()
    if tape is None:
        return Tensor(p.value)
    return tape.watch(p)


def constant(value) -> Tensor:
    return Tensor(value)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def record(value: np.ndarray, parents: Sequence[Tensor], backward_rule: Callable) -> Tensor:
    """Create an output tensor and register its backward rule on the active tape.

    ``backward_rule(grad_out)`` returns one gradient (or None) per parent.
    """
    needs = any(p.requires_grad for p in parents)
    out = Tensor(value, requires_grad=needs)
    if needs:
        tape = active_tape()
        if tape is not None:
            tape.nodes.append(_Node(out, tuple(parents), backward_rule))
        else:
            out.requires_grad = False
    return out


def _accumulate(t: Tensor, g: np.ndarray) -> None:
    if t.grad is None:
        t.grad = g
    else:
        t.grad = t.grad + g


def backward(loss: Tensor, tape: Tape) -> None:
    """Propagate d(loss) back through ``tape`` into ``Parameter.grad``.

    Gradients are added to whatever the parameter buffers already hold, so
    several instances can be accumulated before one optimizer step.
    """
    if loss.value.size != 1:
        raise TapeError(f"backward needs a scalar loss, got shape {loss.shape}")
    if tape.consumed:
        raise TapeError("tape already consumed")
    if not np.isfinite(loss.value).all():
        raise NonFiniteError("loss is not finite")
    tape.consumed = True
    loss.grad = np.ones_like(loss.value)
    for node in reversed(tape.nodes):
        g = node.out.grad
        if g is None:
            continue
        grads = node.backward(g)
        for p, gp in zip(node.parents, grads):
            if gp is not None and p.requires_grad:
                _accumulate(p, gp)
        node.out.grad = None
    for leaf in tape.leaves:
        if leaf.grad is not None and leaf.param is not None and leaf.param.trainable:
            if not np.isfinite(leaf.grad.sum()):
                raise NonFiniteError(f"non-finite gradient for {leaf.param.name}")
            leaf.param.grad += leaf.grad
            leaf.grad = None


# --------------------------------------------------------------------------
# primitives
# --------------------------------------------------------------------------


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    if g.shape == shape:
        return g
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, n in enumerate(shape):
        if n == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g


def _broadcast_check(name, a, b):
    try:
        return np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeError(name, a.shape, b.shape) from None


def add(a, b) -> Tensor:
    """Elementwise sum; numpy broadcasting rules."""
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_check("add", a, b)
    return record(a.value + b.value, (a, b),
                  lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)))


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_check("sub", a, b)
    return record(a.value - b.value, (a, b),
                  lambda g: (_unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)))


def mul(a, b) -> Tensor:
    """Elementwise product; numpy broadcasting rules."""
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_check("mul", a, b)
    av, bv = a.value, b.value
    return record(av * bv, (a, b),
                  lambda g: (_unbroadcast(g * bv, a.shape), _unbroadcast(g * av, b.shape)))


def scale(a, c: float) -> Tensor:
    a = as_tensor(a)
    return record(a.value * c, (a,), lambda g: (g * c,))


def matmul(a, b) -> Tensor:
    """Matrix product for 1-D/2-D operands (matvec, vecmat, matmat)."""
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim not in (1, 2) or b.ndim not in (1, 2) or a.shape[-1] != b.shape[0]:
        raise ShapeError("matmul", a.shape, b.shape)
    av, bv = a.value, b.value

    def rule(g):
        if av.ndim == 2 and bv.ndim == 2:
            return g @ bv.T, av.T @ g
        if av.ndim == 2:  # matvec
            return np.outer(g, bv), av.T @ g
        if bv.ndim == 2:  # vecmat
            return bv @ g, np.outer(av, g)
        return g * bv, g * av

    return record(av @ bv, (a, b), rule)


def matvec(m, v) -> Tensor:
    m, v = as_tensor(m), as_tensor(v)
    if m.ndim != 2 or v.ndim != 1:
        raise ShapeError("matvec", m.shape, v.shape)
    return matmul(m, v)


def linear(x, w, b=None) -> Tensor:
    """Rows of ``x`` mapped by ``w`` (out x in): ``x @ w.T + b``."""
    x, w = as_tensor(x), as_tensor(w)
    if w.ndim != 2 or x.shape[-1] != w.shape[1]:
        raise ShapeError("linear", x.shape, w.shape)
    xv, wv = x.value, w.value
    out = xv @ wv.T
    if b is None:
        return record(out, (x, w), lambda g: (g @ wv, _outer_acc(g, xv)))
    b = as_tensor(b)
    if b.shape != (w.shape[0],):
        raise ShapeError("linear", w.shape, b.shape)
    return record(out + b.value, (x, w, b),
                  lambda g: (g @ wv, _outer_acc(g, xv), g.reshape(-1, g.shape[-1]).sum(axis=0)))


def _outer_acc(g, x):
    if g.ndim == 1:
        return np.outer(g, x)
    return g.T @ x


def sigmoid(a) -> Tensor:
    a = as_tensor(a)
    y = _sigmoid(a.value)
    return record(y, (a,), lambda g: (g * y * (1.0 - y),))


def _sigmoid(x):
    # exp(-|x|) never overflows
    e = np.exp(-np.abs(x))
    return np.where(x >= 0, 1.0 / (1.0 + e), e / (1.0 + e))


def tanh(a) -> Tensor:
    a = as_tensor(a)
    y = np.tanh(a.value)
    return record(y, (a,), lambda g: (g * (1.0 - y * y),))


def relu(a) -> Tensor:
    a = as_tensor(a)
    mask = a.value > 0
    return record(np.where(mask, a.value, 0.0), (a,), lambda g: (g * mask,))


def log(a) -> Tensor:
    a = as_tensor(a)
    v = a.value
    return record(np.log(v), (a,), lambda g: (g / v,))


def exp(a) -> Tensor:
    a = as_tensor(a)
    y = np.exp(a.value)
    return record(y, (a,), lambda g: (g * y,))


def concat(parts: Sequence, axis: int = -1) -> Tensor:
    """Join along ``axis``; the backward splits the upstream gradient exactly."""
    parts = [as_tensor(p) for p in parts]
    if not parts:
        raise ShapeError("concat")
    ref = parts[0].shape
    ax = axis % len(ref)
    for p in parts[1:]:
        if p.ndim != len(ref) or any(p.shape[i] != ref[i] for i in range(len(ref)) if i != ax):
            raise ShapeError("concat", ref, p.shape)
    sizes = [p.shape[ax] for p in parts]
    bounds = np.cumsum(sizes)[:-1]
    return record(np.concatenate([p.value for p in parts], axis=ax), parts,
                  lambda g: tuple(np.split(g, bounds, axis=ax)))


def stack(parts: Sequence, axis: int = 0) -> Tensor:
    parts = [as_tensor(p) for p in parts]
    ref = parts[0].shape
    for p in parts[1:]:
        if p.shape != ref:
            raise ShapeError("stack", ref, p.shape)
    n = len(parts)
    return record(np.stack([p.value for p in parts], axis=axis), parts,
                  lambda g: tuple(np.take(g, i, axis=axis) for i in range(n)))


def take(a, index) -> Tensor:
    """Basic or integer-array indexing; repeated indices accumulate in backward."""
    a = as_tensor(a)
    try:
        out = a.value[index]
    except IndexError:
        raise ShapeError("take", a.shape) from None
    shape = a.shape

    def rule(g):
        full = np.zeros(shape)
        np.add.at(full, index, g)
        return (full,)

    return record(np.array(out, dtype=np.float64), (a,), rule)


def gather_rows(table, ids) -> Tensor:
    """Embedding lookup: rows of a 2-D table selected by an integer vector."""
    table = as_tensor(table)
    ids = np.asarray(ids, dtype=np.int64)
    if table.ndim != 2 or ids.ndim != 1:
        raise ShapeError("gather_rows", table.shape, ids.shape)
    if ids.size and (ids.min() < 0 or ids.max() >= table.shape[0]):
        raise ShapeError("gather_rows", table.shape, ids.shape)
    rows, width = table.shape

    def rule(g):
        full = np.zeros((rows, width))
        np.add.at(full, ids, g)
        return (full,)

    return record(table.value[ids], (table,), rule)


def window(a, start: int, size: int) -> Tensor:
    """Contiguous slice ``a[start:start+size]`` along the first axis."""
    a = as_tensor(a)
    if start < 0 or size < 0 or start + size > a.shape[0]:
        raise ShapeError("window", a.shape, (start, size))
    return take(a, slice(start, start + size))


def reshape(a, shape) -> Tensor:
    a = as_tensor(a)
    old = a.shape
    try:
        out = a.value.reshape(shape)
    except ValueError:
        raise ShapeError("reshape", old, shape) from None
    return record(out, (a,), lambda g: (g.reshape(old),))


def transpose(a) -> Tensor:
    a = as_tensor(a)
    if a.ndim != 2:
        raise ShapeError("transpose", a.shape)
    return record(a.value.T, (a,), lambda g: (g.T,))


def sum(a, axis=None) -> Tensor:  # noqa: A001 - mirrors numpy naming
    a = as_tensor(a)
    shape = a.shape
    out = a.value.sum(axis=axis)

    def rule(g):
        if axis is None:
            return (np.broadcast_to(g, shape).copy(),)
        return (np.broadcast_to(np.expand_dims(g, axis), shape).copy(),)

    return record(out, (a,), rule)


def mean(a, axis=None) -> Tensor:
    a = as_tensor(a)
    n = a.value.size if axis is None else a.shape[axis]
    return scale(sum(a, axis), 1.0 / n)


def max(a, axis: int = 0) -> Tensor:  # noqa: A001
    """Maximum along ``axis``; gradient goes to the first maximal entry."""
    a = as_tensor(a)
    if a.shape[axis] == 0:
        raise ShapeError("max", a.shape)
    idx = np.argmax(a.value, axis=axis)
    out = np.take_along_axis(a.value, np.expand_dims(idx, axis), axis=axis).squeeze(axis)
    shape = a.shape

    def rule(g):
        full = np.zeros(shape)
        np.put_along_axis(full, np.expand_dims(idx, axis), np.expand_dims(g, axis), axis=axis)
        return (full,)

    return record(out, (a,), rule)


def softmax(a) -> Tensor:
    """Softmax over the last axis (max-subtracted)."""
    a = as_tensor(a)
    y = softmax_np(a.value)

    def rule(g):
        return (y * (g - (g * y).sum(axis=-1, keepdims=True)),)

    return record(y, (a,), rule)


def softmax_np(x: np.ndarray) -> np.ndarray:
    z = x - x.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def pad_rows(a, before: int, after: int) -> Tensor:
    """Zero rows added above and below a 2-D tensor."""
    a = as_tensor(a)
    if a.ndim != 2 or before < 0 or after < 0:
        raise ShapeError("pad_rows", a.shape)
    if before == 0 and after == 0:
        return a
    m = a.shape[0]
    out = np.pad(a.value, ((before, after), (0, 0)))
    return record(out, (a,), lambda g: (g[before:before + m],))


def unfold(a, size: int) -> Tensor:
    """Sliding windows over rows: (M, d) -> (M - size + 1, size * d).

    Row j is the concatenation ``a[j], a[j+1], ..., a[j+size-1]``.
    """
    a = as_tensor(a)
    if a.ndim != 2 or size < 1 or a.shape[0] < size:
        raise ShapeError("unfold", a.shape, (size,))
    M, d = a.shape
    nw = M - size + 1
    idx = np.arange(nw)[:, None] + np.arange(size)[None, :]
    out = a.value[idx].reshape(nw, size * d)

    def rule(g):
        full = np.zeros((M, d))
        np.add.at(full, idx, g.reshape(nw, size, d))
        return (full,)

    return record(out, (a,), rule)


def einsum(subscripts: str, a, b) -> Tensor:
    """Two-operand einsum with explicit output (``'ij,jk->ik'``).

    No subscript may repeat inside one operand, and every operand index
    must occur in the other operand or in the output.
    """
    a, b = as_tensor(a), as_tensor(b)
    lhs, out_sub = subscripts.replace(" ", "").split("->")
    sa, sb = lhs.split(",")
    for s, t in ((sa, a), (sb, b)):
        if len(set(s)) != len(s) or len(s) != t.ndim:
            raise ShapeError(f"einsum[{subscripts}]", a.shape, b.shape)
    dims = {}
    for s, t in ((sa, a), (sb, b)):
        for ch, n in zip(s, t.shape):
            if dims.setdefault(ch, n) != n:
                raise ShapeError(f"einsum[{subscripts}]", a.shape, b.shape)
    for ch in sa:
        if ch not in sb and ch not in out_sub:
            raise ShapeError(f"einsum[{subscripts}]", a.shape, b.shape)
    for ch in sb:
        if ch not in sa and ch not in out_sub:
            raise ShapeError(f"einsum[{subscripts}]", a.shape, b.shape)
    av, bv = a.value, b.value
    out = np.einsum(f"{sa},{sb}->{out_sub}", av, bv, optimize=True)

    def rule(g):
        ga = np.einsum(f"{out_sub},{sb}->{sa}", g, bv, optimize=True)
        gb = np.einsum(f"{out_sub},{sa}->{sb}", g, av, optimize=True)
        return ga, gb

    return record(out, (a, b), rule)


# --------------------------------------------------------------------------
# verification and optimization
# --------------------------------------------------------------------------


def finite_difference_check(f: Callable[[], Tensor], params: Sequence[Parameter],
                            eps: float = 1e-5) -> float:
    """Largest ``|analytic - central| / max(1, |analytic|)`` over all entries.

    ``f`` builds the scalar loss from the current parameter values; it is
    called once under a tape and twice per parameter entry without one.
    """
    for p in params:
        p.zero_grad()
    with Tape() as tape:
        loss = f()
    if not np.isfinite(loss.value).all():
        raise NonFiniteError("loss is not finite")
    backward(loss, tape)
    worst = 0.0
    for p in params:
        analytic = p.grad.copy()
        flat = p.value.reshape(-1)
        for k in range(flat.size):
            orig = flat[k]
            flat[k] = orig + eps
            up = f().item()
            flat[k] = orig - eps
            down = f().item()
            flat[k] = orig
            if not (np.isfinite(up) and np.isfinite(down)):
                raise NonFiniteError(f"non-finite loss while perturbing {p.name}[{k}]")
            numeric = (up - down) / (2.0 * eps)
            a = analytic.reshape(-1)[k]
            err = abs(a - numeric) / builtins.max(1.0, abs(a))
            worst = err if err > worst else worst
        p.zero_grad()
    return worst


@dataclass
class AdamState:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)

    @classmethod
    def for_params(cls, params: Sequence[Parameter], **kw) -> "AdamState":
        st = cls(**kw)
        for p in params:
            if p.trainable:
                st.m[p.name] = np.zeros_like(p.value)
                st.v[p.name] = np.zeros_like(p.value)
        return st


def adam_step(params: Sequence[Parameter], state: AdamState) -> None:
    """One bias-corrected Adam update in place; gradients are zeroed afterwards."""
    state.step += 1
    t = state.step
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1 ** t
    c2 = 1.0 - b2 ** t
    for p in params:
        if not p.trainable:
            continue
        if p.name not in state.m:
            raise KeyError(f"no Adam moments for parameter {p.name!r}")
        m, v, g = state.m[p.name], state.v[p.name], p.grad
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        p.value -= state.lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
        p.zero_grad()

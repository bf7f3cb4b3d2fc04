"""Predicate-specific word representations, stacked BiLSTM and the
relation-aware child-sum Tree-LSTM."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autograd as ag
from . import kernels
from .autograd import ShapeError, Tensor
from .conll import DepTree, SrlInstance
from .params import ParamStore
from .vocab import Vocabulary


@dataclass
class EmbeddingDims:
    word: int = 200
    lemma: int = 200
    pretrained: int = 0
    pos: int = 32
    flag: int = 16
    contextual: int = 0

    @property
    def total(self) -> int:
        return self.word + self.lemma + self.pretrained + self.pos + self.flag + self.contextual


class WordRepresentation:
    """x_i = [word; lemma; pretrained (frozen); POS; predicate flag; contextual]."""

    def __init__(self, store: ParamStore, vocab: Vocabulary, dims: EmbeddingDims,
                 pretrained: np.ndarray | None = None, prefix: str = "embed"):
        self.vocab = vocab
        self.dims = dims
        self.parts = []
        if dims.word:
            self.parts.append(("word", store.normal(f"{prefix}.word", (len(vocab.words), dims.word))))
        if dims.lemma:
            self.parts.append(("lemma", store.normal(f"{prefix}.lemma", (len(vocab.lemmas), dims.lemma))))
        if dims.pretrained:
            if pretrained is None or pretrained.shape != (len(vocab.words), dims.pretrained):
                raise ShapeError("pretrained", (len(vocab.words), dims.pretrained),
                                 None if pretrained is None else pretrained.shape)
            self.parts.append(("pretrained", store.frozen(f"{prefix}.pretrained", pretrained)))
        if dims.pos:
            self.parts.append(("pos", store.normal(f"{prefix}.pos", (len(vocab.pos), dims.pos))))
        if dims.flag:
            # row 1: the instance's predicate, row 0: any other token
            self.parts.append(("flag", store.normal(f"{prefix}.flag", (2, dims.flag))))

    @property
    def width(self) -> int:
        return self.dims.total

    def ids(self, inst: SrlInstance) -> dict:
        toks = inst.sentence.tokens
        v = self.vocab
        return {
            "word": np.array([v.words.get(t.form) for t in toks]),
            "pretrained": np.array([v.words.get(t.form) for t in toks]),
            "lemma": np.array([v.lemmas.get(t.lemma or t.form) for t in toks]),
            "pos": np.array([v.pos.get(t.pos) for t in toks]),
            "flag": np.array([1 if t.id == inst.predicate else 0 for t in toks]),
        }

    def __call__(self, inst: SrlInstance, contextual: np.ndarray | None = None) -> Tensor:
        ids = self.ids(inst)
        pieces = [ag.gather_rows(ag.param(p), ids[kind]) for kind, p in self.parts]
        if self.dims.contextual:
            if contextual is None or contextual.shape != (inst.m, self.dims.contextual):
                raise ShapeError("contextual", (inst.m, self.dims.contextual),
                                 None if contextual is None else contextual.shape)
            pieces.append(ag.constant(contextual))
        if not pieces:
            raise ShapeError("embed_tokens", (inst.m, 0))
        return pieces[0] if len(pieces) == 1 else ag.concat(pieces, axis=1)


embed_tokens = WordRepresentation.__call__


# --------------------------------------------------------------------------
# BiLSTM
# --------------------------------------------------------------------------


def lstm_recurrence(Z: Tensor, U: Tensor, reverse: bool = False) -> Tensor:
    """Run the LSTM cell over pre-projected inputs ``Z`` (m x 4h).

    Gates are ``[input, forget, output, candidate]``; ``reverse`` processes
    the sequence right to left but returns states in token order.
    """
    if Z.ndim != 2 or U.ndim != 2 or Z.shape[1] != U.shape[0] or U.shape[0] != 4 * U.shape[1]:
        raise ShapeError("lstm", Z.shape, U.shape)
    z = Z.value[::-1] if reverse else Z.value
    Uv = U.value
    H, C, G = kernels.lstm_forward(np.ascontiguousarray(z), Uv)
    out = H[::-1] if reverse else H

    def rule(g):
        g = g[::-1] if reverse else g
        dZ, dU = kernels.lstm_backward(np.ascontiguousarray(g), Uv, np.ascontiguousarray(Uv.T), H, C, G)
        return (dZ[::-1] if reverse else dZ), dU

    return ag.record(np.ascontiguousarray(out), (Z, U), rule)


class BiLstmStack:
    def __init__(self, store: ParamStore, input_dim: int, hidden: int, layers: int = 4,
                 prefix: str = "bilstm"):
        if layers < 1:
            raise ValueError("BiLSTM needs at least one layer")
        self.hidden = hidden
        self.layers = []
        d = input_dim
        for k in range(layers):
            dirs = []
            for name in ("fwd", "bwd"):
                W = store.normal(f"{prefix}.l{k}.{name}.W", (4 * hidden, d))
                U = store.normal(f"{prefix}.l{k}.{name}.U", (4 * hidden, hidden))
                b = np.zeros(4 * hidden)
                b[hidden:2 * hidden] = 1.0
                bp = store.const(f"{prefix}.l{k}.{name}.b", (4 * hidden,))
                bp.value[:] = b
                dirs.append((W, U, bp))
            self.layers.append(dirs)
            d = 2 * hidden

    @property
    def output_dim(self) -> int:
        return 2 * self.hidden

    def __call__(self, xs: Tensor) -> Tensor:
        if xs.ndim != 2 or xs.shape[0] == 0:
            raise ShapeError("bilstm", xs.shape)
        v = xs
        for (Wf, Uf, bf), (Wb, Ub, bb) in self.layers:
            fwd = lstm_recurrence(ag.linear(v, ag.param(Wf), ag.param(bf)), ag.param(Uf))
            bwd = lstm_recurrence(ag.linear(v, ag.param(Wb), ag.param(bb)), ag.param(Ub), reverse=True)
            v = ag.concat([fwd, bwd], axis=1)
        return v


def bilstm_encode(xs: Tensor, stack: BiLstmStack) -> Tensor:
    return stack(xs)


# --------------------------------------------------------------------------
# Tree-LSTM
# --------------------------------------------------------------------------


def tree_arrays(tree: DepTree):
    """0-based post-order and CSR children lists for the kernels."""
    m = tree.m
    order = np.array([k - 1 for k in tree.postorder()], dtype=np.int64)
    ptr = np.zeros(m + 1, dtype=np.int64)
    idx = []
    for k in range(1, m + 1):
        idx.extend(c - 1 for c in tree.children[k])
        ptr[k] = len(idx)
    return order, ptr, np.array(idx, dtype=np.int64)


def tree_recurrence(WV: Tensor, Us: Tensor, B: Tensor, EB: Tensor, tree: DepTree) -> Tensor:
    """Child-sum sweep given projected inputs ``WV`` (m x 5d, blocks r,i,f,o,u),
    recurrent matrices ``Us`` (5,d,d), biases ``B`` (4,d: i,f,o,u) and the
    per-edge relation bias ``EB`` (row j = bias of the edge into node j)."""
    m = WV.shape[0]
    d = Us.shape[1]
    if tree.m != m or WV.shape[1] != 5 * d or Us.shape != (5, d, d) or B.shape != (4, d) \
            or EB.shape != (m, d):
        raise ShapeError("tree_lstm", WV.shape, Us.shape, B.shape, EB.shape, (tree.m,))
    order, ptr, idx = tree_arrays(tree)
    Usv = np.ascontiguousarray(Us.value)
    H, C, HT, I, O, Uc, R, Fg = kernels.tree_forward(
        np.ascontiguousarray(WV.value), Usv, B.value, np.ascontiguousarray(EB.value), order, ptr, idx)
    UsT = np.ascontiguousarray(Usv.transpose(0, 2, 1))

    def rule(g):
        return kernels.tree_backward(np.ascontiguousarray(g), UsT, H, C, HT, I, O, Uc, R, Fg,
                                     order, ptr, idx)

    return ag.record(H, (WV, Us, B, EB), rule)


GATES = ("r", "i", "f", "o", "u")


class TreeLstm:
    def __init__(self, store: ParamStore, input_dim: int, hidden: int, n_relations: int,
                 prefix: str = "treelstm"):
        self.hidden = hidden
        self.W = [store.normal(f"{prefix}.W_{g}", (hidden, input_dim)) for g in GATES]
        self.U = [store.normal(f"{prefix}.U_{g}", (hidden, hidden)) for g in GATES]
        self.b = [store.const(f"{prefix}.b_{g}", (hidden,)) for g in GATES[1:]]
        self.bL = store.normal(f"{prefix}.b_L", (n_relations, hidden))

    def __call__(self, vs: Tensor, tree: DepTree, rel_ids: np.ndarray) -> Tensor:
        if tree.m != vs.shape[0]:
            raise ShapeError("tree_lstm", vs.shape, (tree.m,))
        Wcat = ag.concat([ag.param(w) for w in self.W], axis=0)
        WV = ag.linear(vs, Wcat)
        Us = ag.stack([ag.param(u) for u in self.U])
        B = ag.stack([ag.param(b) for b in self.b])
        EB = ag.gather_rows(ag.param(self.bL), rel_ids)
        return tree_recurrence(WV, Us, B, EB, tree)


def tree_lstm_encode(vs: Tensor, tree: DepTree, params: TreeLstm, rel_ids) -> Tensor:
    return params(vs, tree, np.asarray(rel_ids, dtype=np.int64))


def relation_ids(tree: DepTree, vocab: Vocabulary) -> np.ndarray:
    """Row of b_L for the edge into each token (unseen labels -> UNK row)."""
    return np.array([vocab.deprels.get(tree.relation[k]) for k in range(1, tree.m + 1)], dtype=np.int64)
